//! CSV telemetry schema.
//!
//! Required columns `t_s,v_mps`. Logged data adds `voltage_v,current_a` as a
//! pair and power is computed per row from them. Synthetic logs carry a
//! `p_w` column instead. Column order is free; other columns are ignored.

use std::io::{Read, Write};

use super::{DataError, DriveLog};
use crate::dynamics::ground_truth_power;

fn column(headers: &::csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

pub fn load_log<R: Read>(reader: R) -> Result<DriveLog, DataError> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let t_col = column(&headers, "t_s").ok_or(DataError::MissingColumn("t_s"))?;
    let v_col = column(&headers, "v_mps").ok_or(DataError::MissingColumn("v_mps"))?;
    let electrical = match (column(&headers, "voltage_v"), column(&headers, "current_a")) {
        (Some(u), Some(i)) => Some((u, i)),
        (None, None) => None,
        _ => return Err(DataError::UnpairedElectrical),
    };
    let p_col = column(&headers, "p_w");

    let mut log = DriveLog::default();
    let (mut volts, mut amps, mut watts) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        let field = |col: usize, name: &str| -> Result<f64, DataError> {
            let raw = rec.get(col).ok_or_else(|| DataError::Malformed {
                line,
                msg: format!("missing field {name}"),
            })?;
            let x: f64 = raw.parse().map_err(|_| DataError::Malformed {
                line,
                msg: format!("{name}: cannot parse {raw:?}"),
            })?;
            if !x.is_finite() {
                return Err(DataError::Malformed {
                    line,
                    msg: format!("{name}: non-finite value"),
                });
            }
            Ok(x)
        };
        let t = field(t_col, "t_s")?;
        let v = field(v_col, "v_mps")?;
        if let Some(&prev) = log.t.last() {
            if !(t > prev) {
                return Err(DataError::NonIncreasingTime { row: row + 1, line });
            }
        }
        if v < 0.0 {
            return Err(DataError::NegativeSpeed { row: row + 1 });
        }
        log.t.push(t);
        log.v.push(v);
        if let Some((u, i)) = electrical {
            volts.push(field(u, "voltage_v")?);
            amps.push(field(i, "current_a")?);
        }
        if let Some(p) = p_col {
            watts.push(field(p, "p_w")?);
        }
    }
    if electrical.is_some() {
        log.power = Some(
            amps.iter()
                .zip(&volts)
                .map(|(&i, &u)| ground_truth_power(i, u))
                .collect(),
        );
        log.voltage = Some(volts);
        log.current = Some(amps);
    } else if p_col.is_some() {
        log.power = Some(watts);
    }
    Ok(log)
}

/// Writes `log` in the schema read by [`load_log`]. Logs without
/// voltage/current but with power (synthetic) get a `p_w` column.
pub fn save_log<W: Write>(writer: W, log: &DriveLog) -> Result<(), DataError> {
    log.validate()?;
    let mut w = ::csv::Writer::from_writer(writer);
    let electrical = log.voltage.as_ref().zip(log.current.as_ref());
    let synthetic_power = if electrical.is_none() { log.power.as_ref() } else { None };
    let mut header = vec!["t_s", "v_mps"];
    if electrical.is_some() {
        header.extend(["voltage_v", "current_a"]);
    }
    if synthetic_power.is_some() {
        header.push("p_w");
    }
    w.write_record(&header)?;
    for i in 0..log.len() {
        let mut rec = vec![log.t[i].to_string(), log.v[i].to_string()];
        if let Some((u, c)) = electrical {
            rec.push(u[i].to_string());
            rec.push(c[i].to_string());
        }
        if let Some(p) = synthetic_power {
            rec.push(p[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_logged_rows() {
        let src = "t_s,v_mps,voltage_v,current_a\n0,0,400,2.5\n1,1.5,399,10\n2,3.0,395,-20\n";
        let log = load_log(src.as_bytes()).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.power.unwrap(), vec![1000.0, 3990.0, -7900.0]);
        assert!(log.dvdt.is_none());
    }

    #[test]
    fn speed_only_has_no_power() {
        let log = load_log("t_s,v_mps\n0,0\n1,1\n".as_bytes()).unwrap();
        assert!(log.power.is_none());
        assert!(matches!(log.power(), Err(DataError::NoPower)));
    }

    #[test]
    fn rejects_repeated_time() {
        let err = load_log("t_s,v_mps\n0,0\n1,1\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::NonIncreasingTime { row: 3, line: 4 }), "{err}");
    }

    #[test]
    fn reports_malformed_line() {
        let err = load_log("t_s,v_mps\n0,0\n1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_columns() {
        assert!(matches!(
            load_log("time,v_mps\n0,0\n".as_bytes()),
            Err(DataError::MissingColumn("t_s"))
        ));
        assert!(matches!(
            load_log("t_s,v_mps,voltage_v\n0,0,400\n".as_bytes()),
            Err(DataError::UnpairedElectrical)
        ));
    }

    proptest! {
        #[test]
        fn save_load_round_trip(
            steps in proptest::collection::vec((1e-3f64..10.0, 0.0f64..50.0, -1e5f64..1e5), 1..40),
            electrical in any::<bool>(),
        ) {
            let mut t = 0.0;
            let mut log = DriveLog::default();
            let mut p = Vec::new();
            for (dt, v, pw) in &steps {
                t += dt;
                log.t.push(t);
                log.v.push(*v);
                p.push(*pw);
            }
            if electrical {
                log.voltage = Some(vec![400.0; p.len()]);
                log.current = Some(p.iter().map(|x| x / 400.0).collect());
                log.power = Some(log.current.as_ref().unwrap().iter().map(|i| i * 400.0).collect());
            } else {
                log.power = Some(p);
            }
            let mut buf = Vec::new();
            save_log(&mut buf, &log).unwrap();
            let back = load_log(&buf[..]).unwrap();
            prop_assert_eq!(back, log);
        }
    }
}
