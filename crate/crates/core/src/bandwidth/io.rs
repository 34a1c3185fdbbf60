use super::{GeometricNet, MultiBandwidth};
use crate::error::{Error, Result};
use std::io::{Read, Write};

/// Writes one row per cell: `box_min_1..d, box_max_1..d, s_1..d`.
pub fn write_bandwidth_csv<W: Write>(h: &MultiBandwidth, w: W) -> Result<()> {
    let d = h.dim();
    let mut wr = csv::Writer::from_writer(w);
    let mut head: Vec<String> = (1..=d).map(|j| format!("box_min_{j}")).collect();
    head.extend((1..=d).map(|j| format!("box_max_{j}")));
    head.extend((1..=d).map(|j| format!("s_{j}")));
    wr.write_record(&head)?;
    for (lo, hi, s) in h.boxes() {
        let mut row: Vec<String> = lo.iter().map(|v| v.to_string()).collect();
        row.extend(hi.iter().map(|v| v.to_string()));
        row.extend(s.iter().map(|v| v.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads the box format back. The half-width `b` is taken from the extent
/// of the boxes; the net is supplied by the caller.
pub fn read_bandwidth_csv<R: Read>(r: R, net: GeometricNet) -> Result<MultiBandwidth> {
    let mut rd = csv::Reader::from_reader(r);
    let head = rd.headers()?.clone();
    let d = head.iter().filter(|c| c.starts_with("s_")).count();
    if d == 0 || head.len() != 3 * d {
        return Err(Error::Parse("expected columns box_min_1..d, box_max_1..d, s_1..d".into()));
    }
    let col = |name: String| -> Result<usize> {
        head.iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))
    };
    let lo_cols: Vec<usize> = (1..=d).map(|j| col(format!("box_min_{j}"))).collect::<Result<_>>()?;
    let hi_cols: Vec<usize> = (1..=d).map(|j| col(format!("box_max_{j}"))).collect::<Result<_>>()?;
    let s_cols: Vec<usize> = (1..=d).map(|j| col(format!("s_{j}"))).collect::<Result<_>>()?;
    let mut boxes = Vec::new();
    let mut b: f64 = 0.0;
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: `{}`", &rec[i])))
        };
        let lo: Vec<f64> = lo_cols.iter().map(|&i| num(i)).collect::<Result<_>>()?;
        let hi: Vec<f64> = hi_cols.iter().map(|&i| num(i)).collect::<Result<_>>()?;
        let s: Vec<u32> = s_cols
            .iter()
            .map(|&i| {
                rec[i]
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Parse(format!("bad index `{}`", &rec[i])))
            })
            .collect::<Result<_>>()?;
        b = lo.iter().chain(&hi).fold(b, |acc, v| acc.max(v.abs()));
        boxes.push((lo, hi, s));
    }
    MultiBandwidth::from_boxes(b, net, &boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let net = GeometricNet::new((-2.0f64).exp(), 40).unwrap();
        let h = MultiBandwidth::new(
            0.5,
            net,
            vec![vec![-0.5, 0.1, 0.5], vec![-0.5, -0.2, 0.3, 0.5]],
            vec![vec![1, 2], vec![0, 0], vec![3, 1], vec![2, 2], vec![5, 4], vec![1, 1]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_bandwidth_csv(&h, &mut buf).unwrap();
        let back = read_bandwidth_csv(&buf[..], net).unwrap();
        assert_eq!(back.level_sets(), h.level_sets());
    }
}
