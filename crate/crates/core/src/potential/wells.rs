use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Potential, Well};
use crate::error::{LabError, Result};
use crate::numeric::dist;

/// A connected run of zeros too long to be an isolated well.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Continuum {
    pub points: Vec<Vec<f64>>,
    pub diameter: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellScan {
    /// Isolated, polished wells.
    pub wells: Vec<Well>,
    /// Candidates whose polish stalled above the tolerance but stayed small.
    pub unpolished: Vec<Well>,
    /// Non-isolated zero sets.
    pub continua: Vec<Continuum>,
    pub grid_spacing: f64,
}

impl WellScan {
    pub fn isolated(&self) -> bool {
        self.continua.is_empty()
    }
}

/// Scans W on {z₁ = a} over the box `lo ≤ (z₂,…,z_d) ≤ hi` with `n` nodes per
/// direction, polishes grid minima by damped Newton and clusters the results.
pub fn find_wells_on_slice(
    p: &dyn Potential,
    a: f64,
    lo: &[f64],
    hi: &[f64],
    n: usize,
) -> Result<WellScan> {
    let d = p.dim();
    let k = d - 1;
    if lo.len() != k || hi.len() != k {
        return Err(LabError::Dimension {
            expected: k,
            got: lo.len().min(hi.len()),
        });
    }
    if n < 3 || lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
        return Err(LabError::InvalidArgument("empty scan box".into()));
    }
    let steps: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| (h - l) / (n - 1) as f64).collect();
    let h = steps.iter().cloned().fold(0.0, f64::max);
    let total = n.pow(k as u32);
    let node = |idx: usize| -> Vec<f64> {
        let mut z = vec![a; d];
        let mut r = idx;
        for j in 0..k {
            z[j + 1] = lo[j] + steps[j] * (r % n) as f64;
            r /= n;
        }
        z
    };
    let values: Vec<f64> = (0..total).map(|i| p.eval(&node(i))).collect();

    let tol = p.well_tolerance();
    let mut candidates = Vec::new();
    for idx in 0..total {
        if is_local_min(idx, &values, n, k) {
            candidates.push(node(idx));
        }
    }

    let mut polished: Vec<(Vec<f64>, bool)> = Vec::new();
    for c in candidates {
        let (z, val) = polish(p, c, tol);
        let ok = val <= tol;
        if !ok && val > 1e-4 {
            continue;
        }
        if polished.iter().any(|(q, _)| dist(q, &z) < 1e-6) {
            continue;
        }
        polished.push((z, ok));
    }

    // Single-linkage clusters over the polished zeros.
    let link = 2.5 * h * (k as f64).sqrt();
    let m = polished.len();
    let mut label: Vec<usize> = (0..m).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        let mut j = i;
        while l[j] != r {
            let nx = l[j];
            l[j] = r;
            j = nx;
        }
        r
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if polished[i].1 && polished[j].1 && dist(&polished[i].0, &polished[j].0) <= link {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                label[ri] = rj;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..m {
        let r = find(&mut label, i);
        match roots.iter().position(|&x| x == r) {
            Some(g) => groups[g].push(i),
            None => {
                roots.push(r);
                groups.push(vec![i]);
            }
        }
    }

    let mut scan = WellScan {
        wells: Vec::new(),
        unpolished: Vec::new(),
        continua: Vec::new(),
        grid_spacing: h,
    };
    for g in groups {
        let mut diam: f64 = 0.0;
        for &i in &g {
            for &j in &g {
                diam = diam.max(dist(&polished[i].0, &polished[j].0));
            }
        }
        if diam > 10.0 * h {
            scan.continua.push(Continuum {
                points: g.iter().map(|&i| polished[i].0.clone()).collect(),
                diameter: diam,
            });
            continue;
        }
        for i in g {
            let mut w = Well::new(polished[i].0.clone());
            w.polished = polished[i].1;
            if w.polished {
                scan.wells.push(w);
            } else {
                scan.unpolished.push(w);
            }
        }
    }
    let key = |w: &Well| w.point.iter().map(|x| (x * 1e9).round() as i64).collect::<Vec<_>>();
    scan.wells.sort_by_key(key);
    Ok(scan)
}

fn is_local_min(idx: usize, values: &[f64], n: usize, k: usize) -> bool {
    let v = values[idx];
    let mut coords = vec![0usize; k];
    let mut r = idx;
    for c in coords.iter_mut() {
        *c = r % n;
        r /= n;
    }
    let neighbours = 3usize.pow(k as u32);
    for code in 0..neighbours {
        let mut c = code;
        let mut off = 0isize;
        let mut stride = 1isize;
        let mut valid = true;
        let mut centre = true;
        for &x in &coords {
            let delta = (c % 3) as isize - 1;
            c /= 3;
            if delta != 0 {
                centre = false;
            }
            let nx = x as isize + delta;
            if nx < 0 || nx >= n as isize {
                valid = false;
            }
            off += delta * stride;
            stride *= n as isize;
        }
        if centre || !valid {
            continue;
        }
        if values[(idx as isize + off) as usize] < v {
            return false;
        }
    }
    true
}

/// Levenberg-damped Newton on W restricted to the slice (first coordinate frozen).
fn polish(p: &dyn Potential, mut z: Vec<f64>, tol: f64) -> (Vec<f64>, f64) {
    let d = z.len();
    let k = d - 1;
    let mut val = p.eval(&z);
    let mut mu = 1e-8;
    let mut g = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for _ in 0..200 {
        if val <= 1e-3 * tol {
            break;
        }
        p.grad(&z, &mut g);
        let rg = DVector::from_iterator(k, g[1..].iter().copied());
        if rg.norm() < 1e-300 {
            break;
        }
        let mut hm = DMatrix::zeros(k, k);
        let mut zp = z.clone();
        for j in 0..k {
            let s = 1e-6 * (1.0 + z[j + 1].abs());
            zp[j + 1] = z[j + 1] + s;
            p.grad(&zp, &mut gp);
            zp[j + 1] = z[j + 1] - s;
            p.grad(&zp, &mut gm);
            zp[j + 1] = z[j + 1];
            for i in 0..k {
                hm[(i, j)] = (gp[i + 1] - gm[i + 1]) / (2.0 * s);
            }
        }
        hm = 0.5 * (&hm + hm.transpose());
        let mut improved = false;
        for _ in 0..40 {
            let shift = mu * (1.0 + hm.diagonal().amax());
            let a = &hm + DMatrix::identity(k, k) * shift;
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&rg),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let mut trial = z.clone();
            for j in 0..k {
                trial[j + 1] -= step[j];
            }
            let tv = p.eval(&trial);
            if tv < val {
                let moved = step.norm();
                z = trial;
                val = tv;
                mu = (mu * 0.1).max(1e-12);
                improved = moved > 1e-15;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (z, val)
}
