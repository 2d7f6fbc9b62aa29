use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;

use super::{SpectralError, SpectralField, TorusGrid};

const MAGIC: &str = "# scbf-field v1";

/// Writes a field as text: a header with grid metadata followed by one
/// `k1 k2 component re im` line per stored coefficient. Floats use the
/// shortest round-trip representation, so reading back is exact.
pub fn write_field<W: Write>(u: &SpectralField, mut out: W) -> std::io::Result<()> {
    let g = u.grid();
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "modes_per_axis {}", g.modes()).unwrap();
    writeln!(s, "points_per_axis {}", g.points()).unwrap();
    writeln!(s, "padding_factor {:?}", g.padding()).unwrap();
    writeln!(s, "k1 k2 component re im").unwrap();
    for (idx, c) in u.coeffs().iter().enumerate() {
        let (k1, k2) = g.wavevector(idx);
        for (comp, z) in c.iter().enumerate() {
            writeln!(s, "{k1} {k2} {} {:?} {:?}", comp + 1, z.re, z.im).unwrap();
        }
    }
    out.write_all(s.as_bytes())
}

pub fn field_to_string(u: &SpectralField) -> String {
    let mut buf = Vec::new();
    write_field(u, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses the format produced by [`write_field`]. The grid is rebuilt from
/// the header (same `N` and `M`).
pub fn read_field<R: Read>(input: R) -> Result<SpectralField, SpectralError> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let mut next = || -> Result<String, SpectralError> {
        lines
            .next()
            .ok_or_else(|| SpectralError::Parse("unexpected end of snapshot".into()))?
            .map_err(|e| SpectralError::Parse(e.to_string()))
    };
    if next()?.trim() != MAGIC {
        return Err(SpectralError::Parse("missing snapshot header".into()));
    }
    let n: usize = header_value(&next()?, "modes_per_axis")?;
    let m: usize = header_value(&next()?, "points_per_axis")?;
    let padding: f64 = header_value(&next()?, "padding_factor")?;
    let _columns = next()?;
    let grid = TorusGrid::with_points(n, m)?;
    let _ = padding;
    let mut coeffs = vec![[Complex64::new(0.0, 0.0); 2]; grid.lattice_len()];
    let mut seen = 0usize;
    for line in lines {
        let line = line.map_err(|e| SpectralError::Parse(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(SpectralError::Parse(format!("malformed row: {line}")));
        }
        let parse_err = |e: &dyn std::fmt::Display| SpectralError::Parse(format!("{e} in row: {line}"));
        let k1: i32 = parts[0].parse().map_err(|e| parse_err(&e))?;
        let k2: i32 = parts[1].parse().map_err(|e| parse_err(&e))?;
        let comp: usize = parts[2].parse().map_err(|e| parse_err(&e))?;
        let re: f64 = parts[3].parse().map_err(|e| parse_err(&e))?;
        let im: f64 = parts[4].parse().map_err(|e| parse_err(&e))?;
        let idx = grid
            .index(k1, k2)
            .ok_or_else(|| SpectralError::Parse(format!("wavevector ({k1},{k2}) outside truncation")))?;
        if !(1..=2).contains(&comp) {
            return Err(SpectralError::Parse(format!("component must be 1 or 2: {line}")));
        }
        coeffs[idx][comp - 1] = Complex64::new(re, im);
        seen += 1;
    }
    if seen != 2 * grid.lattice_len() {
        return Err(SpectralError::Parse(format!(
            "expected {} coefficient rows, found {seen}",
            2 * grid.lattice_len()
        )));
    }
    SpectralField::from_raw(&grid, coeffs)
}

fn header_value<T: std::str::FromStr>(line: &str, key: &str) -> Result<T, SpectralError> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next()) {
        (Some(k), Some(v)) if k == key => v
            .parse()
            .map_err(|_| SpectralError::Parse(format!("bad value for {key}: {v}"))),
        _ => Err(SpectralError::Parse(format!("expected `{key} <value>`, got `{line}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_field;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn snapshot_roundtrip_is_exact(seed in any::<u64>(), n in 1usize..6, decay in 0.5f64..3.0) {
            let g = TorusGrid::new(n, 1.5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&g, decay, &mut rng).scaled(1e-3 + seed as f64 * 1e-20);
            let text = field_to_string(&u);
            let back = read_field(text.as_bytes()).unwrap();
            prop_assert_eq!(back.grid().points(), g.points());
            prop_assert!(back == u);
        }
    }

    #[test]
    fn rejects_truncated_input() {
        let g = TorusGrid::new(2, 1.5).unwrap();
        let text = field_to_string(&SpectralField::zeros(&g));
        let cut: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(read_field(cut.as_bytes()).is_err());
        assert!(read_field("garbage".as_bytes()).is_err());
    }
}
