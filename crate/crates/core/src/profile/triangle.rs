use serde::{Deserialize, Serialize};

use super::geodesic::{geodesic_cost, GeodesicOptions, PathSpace};
use crate::error::Result;
use crate::numeric::dist;
use crate::potential::Potential;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginRow {
    pub well: Vec<f64>,
    pub geod_minus: f64,
    pub geod_plus: f64,
    /// geod(u⁻,z) + geod(z,u⁺) − geod(u⁻,u⁺).
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangleReport {
    pub direct: f64,
    pub rows: Vec<MarginRow>,
    /// Margins must exceed this to count as strict.
    pub numerical_margin: f64,
    pub strict: bool,
}

/// Tabulates how much detours through each intermediate well on the slice
/// cost compared to the direct transition.
pub fn check_triangle_strict(
    p: &dyn Potential,
    a: f64,
    wells: &[Vec<f64>],
    u_minus: &[f64],
    u_plus: &[f64],
    opts: &GeodesicOptions,
) -> Result<TriangleReport> {
    let numerical_margin = 1e-4;
    let space = PathSpace::Slice(a);
    let direct = geodesic_cost(p, space, u_minus, u_plus, opts)?.cost;
    let mut rows = Vec::new();
    for z in wells {
        if dist(z, u_minus) < 1e-8 || dist(z, u_plus) < 1e-8 {
            continue;
        }
        let gm = geodesic_cost(p, space, u_minus, z, opts)?.cost;
        let gp = geodesic_cost(p, space, z, u_plus, opts)?.cost;
        rows.push(MarginRow {
            well: z.clone(),
            geod_minus: gm,
            geod_plus: gp,
            margin: gm + gp - direct,
        });
    }
    let strict = rows.iter().all(|r| r.margin > numerical_margin);
    Ok(TriangleReport {
        direct,
        rows,
        numerical_margin,
        strict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::builtin_by_tag;

    fn opts() -> GeodesicOptions {
        GeodesicOptions {
            n_nodes: 100,
            ..Default::default()
        }
    }

    #[test]
    fn two_wells_are_vacuously_strict() {
        let gl = builtin_by_tag("gl").unwrap();
        let w = vec![vec![0.0, -1.0], vec![0.0, 1.0]];
        let r = check_triangle_strict(gl.as_ref(), 0.0, &w, &w[0], &w[1], &opts()).unwrap();
        assert!(r.rows.is_empty() && r.strict);
    }

    #[test]
    fn w3_detours_through_e3_tie_with_the_direct_path() {
        // −e₂ → e₃ and e₃ → e₂ each cost 2/3, matching the direct cost 4/3.
        let w3 = builtin_by_tag("wd3").unwrap();
        let wells = vec![
            vec![0.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, -1.0],
        ];
        let r = check_triangle_strict(w3.as_ref(), 0.0, &wells, &wells[0], &wells[1], &opts())
            .unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert!((row.geod_minus - 2.0 / 3.0).abs() < 1e-3, "{row:?}");
            assert!((row.geod_plus - 2.0 / 3.0).abs() < 1e-3, "{row:?}");
            assert!(row.margin.abs() < 2e-3, "{row:?}");
        }
        assert!(!r.strict);
    }

    #[test]
    fn coincident_ends_give_round_trip_margins() {
        let w3 = builtin_by_tag("wd3").unwrap();
        let u = vec![0.0, 1.0, 0.0];
        let z = vec![0.0, 0.0, 1.0];
        let r = check_triangle_strict(w3.as_ref(), 0.0, &[u.clone(), z.clone()], &u, &u, &opts())
            .unwrap();
        assert_eq!(r.direct, 0.0);
        assert!((r.rows[0].margin - 4.0 / 3.0).abs() < 2e-3);
        assert!(r.strict);
    }
}
