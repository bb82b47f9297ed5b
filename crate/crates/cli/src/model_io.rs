//! Text model files.
//!
//! ```text
//! HASHMODEL v1
//! bits=<m> dim=<d> method=<tag> loss=<tag>
//! w <m decimals>
//! h <d decimals for v> <decimal for b>    (m lines)
//! ```

use std::io::{BufRead, Write};

use binhash::{Error, HashFunction, HashModel, Result};

const MAGIC: &str = "HASHMODEL v1";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_tag(name: &str, tag: &str) -> Result<()> {
    if tag.is_empty() || tag.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(Error::Config(format!(
            "{name} tag {tag:?} must be non-empty without spaces or '='"
        )));
    }
    Ok(())
}

pub fn write_model<W: Write>(model: &HashModel<f64>, mut out: W) -> Result<()> {
    check_tag("method", &model.method)?;
    check_tag("loss", &model.loss_tag)?;
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "bits={} dim={} method={} loss={}",
        model.bits(),
        model.dim(),
        model.method,
        model.loss_tag
    )?;
    let mut line = String::from("w");
    for &w in &model.weights {
        line.push(' ');
        line.push_str(&fmt(w));
    }
    writeln!(out, "{line}")?;
    for h in &model.functions {
        let mut line = String::from("h");
        for &v in h.v.iter().chain([&h.b]) {
            line.push(' ');
            line.push_str(&fmt(v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn numbers(line_no: usize, text: &str, prefix: &str, count: usize) -> Result<Vec<f64>> {
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some(prefix) {
        return Err(parse_err(line_no, format!("expected a '{prefix}' record")));
    }
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad number {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != count {
        return Err(parse_err(
            line_no,
            format!("expected {count} numbers, found {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn read_model<R: BufRead>(input: R) -> Result<HashModel<f64>> {
    let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
    let get = |i: usize| {
        lines
            .get(i)
            .map(|s| s.trim_end())
            .ok_or_else(|| parse_err(i + 1, "unexpected end of file"))
    };
    if get(0)? != MAGIC {
        return Err(parse_err(1, format!("expected '{MAGIC}'")));
    }
    let (mut bits, mut dim, mut method, mut loss) = (None, None, None, None);
    for field in get(1)?.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(2, format!("bad field {field:?}")))?;
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| parse_err(2, format!("bad count {value:?}")))
        };
        match key {
            "bits" => bits = Some(count()?),
            "dim" => dim = Some(count()?),
            "method" => method = Some(value.to_string()),
            "loss" => loss = Some(value.to_string()),
            _ => return Err(parse_err(2, format!("unknown field {key:?}"))),
        }
    }
    let missing = |k: &str| parse_err(2, format!("missing {k}"));
    let bits = bits.ok_or_else(|| missing("bits"))?;
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let method = method.ok_or_else(|| missing("method"))?;
    let loss = loss.ok_or_else(|| missing("loss"))?;

    let weights = numbers(3, get(2)?, "w", bits)?;
    let functions = (0..bits)
        .map(|r| {
            let mut v = numbers(4 + r, get(3 + r)?, "h", dim + 1)?;
            let b = v.pop().expect("dim + 1 values");
            HashFunction::new(v, b)
        })
        .collect::<Result<Vec<_>>>()?;
    if lines[3 + bits..].iter().any(|l| !l.trim().is_empty()) {
        return Err(parse_err(
            4 + bits,
            "trailing content after the last hash function",
        ));
    }
    HashModel::new(functions, weights, method, loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> HashModel<f64> {
        let h1 = HashFunction::new(vec![0.1, -1.0 / 3.0, 1e-300], 2.5e17).unwrap();
        let h2 = HashFunction::new(vec![f64::MIN_POSITIVE, 7.0, -0.0], -0.125).unwrap();
        HashModel::new(
            vec![h1, h2],
            vec![std::f64::consts::PI, 0.0],
            "cghash",
            "squared-hinge+l1",
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "HASHMODEL v1");
        assert_eq!(lines[1], "bits=2 dim=3 method=cghash loss=squared-hinge+l1");
        assert!(lines[2].starts_with("w 3.1415926535897931e0 "));
        assert_eq!(lines.len(), 5);
        assert!(lines[3..]
            .iter()
            .all(|l| l.starts_with("h ") && l.split(' ').count() == 5));
    }

    #[test]
    fn malformed_files_name_the_line() {
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "h x 1 2 3";
        let broken = lines.join("\n");
        assert!(matches!(
            read_model(broken.as_bytes()),
            Err(Error::Parse { line: 4, .. })
        ));
        let short: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_model(short.as_bytes()),
            Err(Error::Parse { line: 5, .. })
        ));
        assert!(matches!(
            read_model("HASHMODEL v2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn tags_with_spaces_are_rejected() {
        let mut m = model();
        m.method = "two words".into();
        assert!(write_model(&m, Vec::new()).is_err());
    }
}
