//! FX smile quotes: ATM / risk-reversal / butterfly to five (strike, vol) points.
//!
//! Conventions: forward delta, premium unadjusted, delta-neutral-straddle ATM,
//! ACT/365 fixed tenors and `forward = spot + forward points`.

use std::io::{Read, Write};
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::black::CallPut;
use crate::error::{Error, Result};
use crate::special::norm_ppf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeltaLabel {
    #[serde(rename = "10P")]
    Put10,
    #[serde(rename = "25P")]
    Put25,
    #[serde(rename = "ATM")]
    Atm,
    #[serde(rename = "25C")]
    Call25,
    #[serde(rename = "10C")]
    Call10,
}

impl DeltaLabel {
    pub const ALL: [DeltaLabel; 5] = [
        DeltaLabel::Put10,
        DeltaLabel::Put25,
        DeltaLabel::Atm,
        DeltaLabel::Call25,
        DeltaLabel::Call10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeltaLabel::Put10 => "10P",
            DeltaLabel::Put25 => "25P",
            DeltaLabel::Atm => "ATM",
            DeltaLabel::Call25 => "25C",
            DeltaLabel::Call10 => "10C",
        }
    }

    /// Absolute forward delta and option side; `None` for ATM.
    pub fn delta(self) -> Option<(f64, CallPut)> {
        match self {
            DeltaLabel::Put10 => Some((0.10, CallPut::Put)),
            DeltaLabel::Put25 => Some((0.25, CallPut::Put)),
            DeltaLabel::Atm => None,
            DeltaLabel::Call25 => Some((0.25, CallPut::Call)),
            DeltaLabel::Call10 => Some((0.10, CallPut::Call)),
        }
    }
}

impl FromStr for DeltaLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DeltaLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown delta label `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DayCount {
    #[default]
    #[serde(rename = "ACT/365F")]
    Act365Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenorQuote {
    /// Year fraction.
    pub tenor: f64,
    pub sigma_atm: f64,
    pub rr25: f64,
    pub bf25: f64,
    pub rr10: f64,
    pub bf10: f64,
    pub fwd_points: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuoteSet {
    /// Market pair `FOR-DOM`, e.g. `USD-JPY`.
    pub pair: String,
    pub spot: f64,
    #[serde(default)]
    pub day_count: DayCount,
    pub tenors: Vec<TenorQuote>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrikeVol {
    pub label: DeltaLabel,
    pub strike: f64,
    pub vol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenorSmile {
    pub tenor: f64,
    pub forward: f64,
    pub points: [StrikeVol; 5],
}

// Shortest round-trip decimal of the f64, so quote-like inputs stay exact.
fn dec(x: f64) -> Result<Decimal> {
    if !x.is_finite() {
        return Err(Error::Data(format!("quote {x} is not finite")));
    }
    Decimal::from_str(&x.to_string())
        .or_else(|_| Decimal::from_scientific(&format!("{x:e}")))
        .map_err(|e| Error::Data(format!("quote {x} not representable: {e}")))
}

fn f64_of(d: Decimal) -> f64 {
    d.to_string().parse().expect("decimal renders as a valid float")
}

/// Wing vols in label order `10P, 25P, ATM, 25C, 10C`:
/// `σ_C = σ_ATM + RR/2 + BF`, `σ_P = σ_ATM - RR/2 + BF`.
///
/// Arithmetic is decimal so that the map and its inverse round-trip exactly.
pub fn wing_vols(q: &TenorQuote) -> Result<[f64; 5]> {
    let two = Decimal::TWO;
    let atm = dec(q.sigma_atm)?;
    let (rr25, bf25, rr10, bf10) = (dec(q.rr25)?, dec(q.bf25)?, dec(q.rr10)?, dec(q.bf10)?);
    let vols = [
        atm - rr10 / two + bf10,
        atm - rr25 / two + bf25,
        atm,
        atm + rr25 / two + bf25,
        atm + rr10 / two + bf10,
    ];
    let out = vols.map(f64_of);
    if let Some((n, v)) = out.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Data(format!(
            "non-positive {} vol {v} at tenor {}",
            DeltaLabel::ALL[n].as_str(),
            q.tenor
        )));
    }
    Ok(out)
}

/// Inverse of [`wing_vols`]: `(σ_ATM, RR25, BF25, RR10, BF10)`.
pub fn quotes_from_wing_vols(vols: [f64; 5]) -> Result<(f64, f64, f64, f64, f64)> {
    let two = Decimal::TWO;
    let [p10, p25, atm, c25, c10] = [
        dec(vols[0])?,
        dec(vols[1])?,
        dec(vols[2])?,
        dec(vols[3])?,
        dec(vols[4])?,
    ];
    Ok((
        f64_of(atm),
        f64_of(c25 - p25),
        f64_of((c25 + p25) / two - atm),
        f64_of(c10 - p10),
        f64_of((c10 + p10) / two - atm),
    ))
}

/// Strike with forward delta `delta` (absolute value) on the given side.
pub fn delta_to_strike(forward: f64, vol: f64, expiry: f64, delta: f64, cp: CallPut) -> f64 {
    let sd = vol * expiry.sqrt();
    let d1 = match cp {
        CallPut::Call => norm_ppf(delta),
        CallPut::Put => norm_ppf(1.0 - delta),
    };
    forward * (-sd * d1 + 0.5 * sd * sd).exp()
}

/// Delta-neutral straddle strike `F e^{σ²T/2}`.
pub fn atm_strike(forward: f64, vol: f64, expiry: f64) -> f64 {
    forward * (0.5 * vol * vol * expiry).exp()
}

pub fn strike_for(label: DeltaLabel, forward: f64, vol: f64, expiry: f64) -> f64 {
    match label.delta() {
        Some((d, cp)) => delta_to_strike(forward, vol, expiry, d, cp),
        None => atm_strike(forward, vol, expiry),
    }
}

pub fn smile(tenor: f64, forward: f64, vols: [f64; 5]) -> TenorSmile {
    let points = std::array::from_fn(|n| {
        let label = DeltaLabel::ALL[n];
        StrikeVol {
            label,
            strike: strike_for(label, forward, vols[n], tenor),
            vol: vols[n],
        }
    });
    TenorSmile { tenor, forward, points }
}

impl QuoteSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0) || !self.spot.is_finite() {
            return Err(Error::Data(format!("{}: spot must be positive", self.pair)));
        }
        for q in &self.tenors {
            if !(q.tenor > 0.0) || !q.tenor.is_finite() {
                return Err(Error::Data(format!(
                    "{}: tenor {} must be positive",
                    self.pair, q.tenor
                )));
            }
            if !(self.spot + q.fwd_points > 0.0) {
                return Err(Error::Data(format!(
                    "{}: non-positive forward at tenor {}",
                    self.pair, q.tenor
                )));
            }
            wing_vols(q)?;
        }
        Ok(())
    }
}

/// Five points per tenor in the order `10P, 25P, ATM, 25C, 10C`.
pub fn quotes_to_strike_vols(q: &QuoteSet) -> Result<Vec<TenorSmile>> {
    q.validate()?;
    q.tenors
        .iter()
        .map(|t| {
            let s = smile(t.tenor, q.spot + t.fwd_points, wing_vols(t)?);
            if s.points.windows(2).any(|w| !(w[0].strike < w[1].strike)) {
                return Err(Error::Data(format!(
                    "{}: strikes not increasing at tenor {}",
                    q.pair, t.tenor
                )));
            }
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct QuoteRow {
    pair: String,
    tenor: f64,
    sigma_atm: f64,
    rr25: f64,
    bf25: f64,
    rr10: f64,
    bf10: f64,
    spot: f64,
    fwd_points: f64,
}

/// Reads `pair,tenor,sigma_atm,rr25,bf25,rr10,bf10,spot,fwd_points`, grouping rows by pair
/// in order of first appearance.
pub fn read_quotes_csv<R: Read>(reader: R) -> Result<Vec<QuoteSet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut sets: Vec<QuoteSet> = Vec::new();
    for (line, row) in rdr.deserialize::<QuoteRow>().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("quotes row {}: {e}", line + 1)))?;
        let tq = TenorQuote {
            tenor: row.tenor,
            sigma_atm: row.sigma_atm,
            rr25: row.rr25,
            bf25: row.bf25,
            rr10: row.rr10,
            bf10: row.bf10,
            fwd_points: row.fwd_points,
        };
        match sets.iter_mut().find(|s| s.pair == row.pair) {
            Some(s) => {
                if s.spot != row.spot {
                    return Err(Error::Data(format!(
                        "{}: inconsistent spot {} vs {}",
                        row.pair, s.spot, row.spot
                    )));
                }
                s.tenors.push(tq);
            }
            None => sets.push(QuoteSet {
                pair: row.pair,
                spot: row.spot,
                day_count: DayCount::Act365Fixed,
                tenors: vec![tq],
            }),
        }
    }
    for s in &sets {
        s.validate()?;
    }
    Ok(sets)
}

pub fn write_quotes_csv<W: Write>(sets: &[QuoteSet], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in sets {
        for t in &s.tenors {
            w.serialize(QuoteRow {
                pair: s.pair.clone(),
                tenor: t.tenor,
                sigma_atm: t.sigma_atm,
                rr25: t.rr25,
                bf25: t.bf25,
                rr10: t.rr10,
                bf10: t.bf10,
                spot: s.spot,
                fwd_points: t.fwd_points,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tq(atm: f64, rr25: f64, bf25: f64, rr10: f64, bf10: f64) -> TenorQuote {
        TenorQuote {
            tenor: 1.0,
            sigma_atm: atm,
            rr25,
            bf25,
            rr10,
            bf10,
            fwd_points: 0.0,
        }
    }

    #[test]
    fn wing_examples() {
        let v = wing_vols(&tq(0.10, 0.01, 0.002, 0.0, 0.0)).unwrap();
        assert_eq!(v[3], 0.107);
        assert_eq!(v[1], 0.097);
        let flat = wing_vols(&tq(0.1, 0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(flat.iter().all(|v| *v == 0.1));
        let s = smile(1.0, 100.0, flat);
        assert!(s.points.windows(2).all(|w| w[0].strike < w[1].strike));
        assert!(matches!(wing_vols(&tq(0.05, 0.2, 0.0, 0.0, 0.0)), Err(Error::Data(_))));
    }

    #[test]
    fn delta_strike_example() {
        let k = delta_to_strike(100.0, 0.107, 1.0, 0.25, CallPut::Call);
        let want = 100.0 * (0.107 * 0.674_489_750_196_081_7 + 0.5 * 0.107 * 0.107f64).exp();
        assert!((k - want).abs() < 1e-10);
        assert!((k - 108.10).abs() < 0.01);
        assert_eq!(atm_strike(100.0, 0.1, 1.0), 100.0 * 0.005f64.exp());
    }

    #[test]
    fn strikes_reproduce_forward_delta() {
        let (f, t) = (1.1, 0.5);
        for (label, vol) in [
            (DeltaLabel::Put10, 0.12),
            (DeltaLabel::Put25, 0.1),
            (DeltaLabel::Call25, 0.09),
        ] {
            let k = strike_for(label, f, vol, t);
            let sd = vol * f64::sqrt(t);
            let d1 = (f / k).ln() / sd + 0.5 * sd;
            let (delta, cp) = label.delta().unwrap();
            let got = match cp {
                CallPut::Call => crate::special::norm_cdf(d1),
                CallPut::Put => crate::special::norm_cdf(-d1),
            };
            assert!((got - delta).abs() < 1e-13, "{label:?}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let text = "pair,tenor,sigma_atm,rr25,bf25,rr10,bf10,spot,fwd_points\n\
                    USD-JPY,0.0192,0.1,-0.01,0.002,-0.02,0.006,107.5,-0.01\n\
                    EUR-USD,0.0192,0.08,-0.005,0.001,-0.01,0.003,1.09,0.0003\n\
                    USD-JPY,0.5,0.11,-0.012,0.003,-0.025,0.008,107.5,-0.3\n";
        let sets = read_quotes_csv(text.as_bytes()).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].tenors.len(), 2);
        let mut out = Vec::new();
        write_quotes_csv(&sets, &mut out).unwrap();
        assert_eq!(read_quotes_csv(out.as_slice()).unwrap(), sets);
        let smiles = quotes_to_strike_vols(&sets[0]).unwrap();
        assert_eq!(smiles[1].forward, 107.2);
    }

    #[test]
    fn malformed_csv_is_a_data_error() {
        let text = "pair,tenor,sigma_atm,rr25,bf25,rr10,bf10,spot,fwd_points\nUSD-JPY,abc,0.1,0,0,0,0,107,0\n";
        assert!(matches!(read_quotes_csv(text.as_bytes()), Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn wing_vols_round_trip_bit_exact(
            atm in 1u32..5000, d1 in 0u32..3000, d2 in 0u32..3000, d3 in 0u32..3000, d4 in 0u32..3000,
        ) {
            let v = |n: u32| format!("0.{:05}", n + 1).parse::<f64>().unwrap();
            let vols = [v(atm + d1 + d2), v(atm + d2), v(atm), v(atm + d3), v(atm + d3 + d4)];
            let (a, r25, b25, r10, b10) = quotes_from_wing_vols(vols).unwrap();
            let back = wing_vols(&tq(a, r25, b25, r10, b10)).unwrap();
            for n in 0..5 {
                prop_assert_eq!(back[n].to_bits(), vols[n].to_bits());
            }
        }

        #[test]
        fn eight_decimal_vols_round_trip(raw in proptest::array::uniform5(0.01f64..0.9)) {
            let vols = raw.map(|v| format!("{v:.8}").parse::<f64>().unwrap());
            let (a, r25, b25, r10, b10) = quotes_from_wing_vols(vols).unwrap();
            let back = wing_vols(&tq(a, r25, b25, r10, b10)).unwrap();
            prop_assert_eq!(back, vols);
        }
    }
}
