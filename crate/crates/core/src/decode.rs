//! Message recovery once the path parameters are known.
//!
//! With estimated atoms the measurements are linear in the products
//! `c_{ℓ,i} f_i`; a least-squares solve over the dictionary whose block
//! `(i, ℓ)` has rows `[a(ζ̂_{ℓ,i})]_n (d_n^i)ᵀ` recovers them, and a rank-one
//! factorization per user separates the unit-norm message from the gains.

use serde::{Deserialize, Serialize};

use crate::atoms::{steering_vector, Dims, Zeta};
use crate::error::{domain, Result};
use crate::linalg::{hermitian_eig_desc, singular_values, CMat, CVec, C64};
use crate::model::{anchor_phase, canonicalize_levels, Codebook, MeasurementSet, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Unit-norm messages, phase-anchored.
    pub messages: Vec<Vec<C64>>,
    /// Gains `ĉ_{ℓ,i}` per user and path.
    pub gains: Vec<Vec<C64>>,
    /// Demapped 8-ASK levels per user, when computed.
    pub symbols: Vec<Vec<i8>>,
    pub ser_per_user: Vec<f64>,
    pub ser_aggregate: f64,
    /// Users whose least-squares block was identically zero.
    pub no_energy: Vec<bool>,
    /// Ratio of extreme singular values of the dictionary.
    pub condition: f64,
    pub ridge: bool,
}

/// Dictionary with one `L×k_i` block per estimated path, users in order.
pub fn build_dictionary(zetas: &[Vec<Zeta>], codebooks: &[&Codebook], dims: Dims) -> Result<CMat> {
    if zetas.len() != codebooks.len() {
        return domain(format!("{} atom lists for {} users", zetas.len(), codebooks.len()));
    }
    let l = dims.len();
    let cols: usize = zetas.iter().zip(codebooks).map(|(z, cb)| z.len() * cb.k()).sum();
    if cols > l {
        return domain(format!("{cols} unknowns exceed the {l} samples"));
    }
    let mut dict = CMat::zeros(l, cols);
    let mut c0 = 0;
    for (zs, cb) in zetas.iter().zip(codebooks) {
        if cb.matrix.nrows() != l {
            return domain("codebook row count does not match L");
        }
        for &z in zs {
            let a = steering_vector(z, dims);
            for j in 0..cb.k() {
                for n in 0..l {
                    dict[(n, c0 + j)] = a[n] * cb.matrix[(n, j)];
                }
            }
            c0 += cb.k();
        }
    }
    Ok(dict)
}

/// Least-squares fit and per-user rank-one factorization. `structure`
/// lists `(ŝ_i, k_i)` per user in dictionary order.
pub fn recover_messages(dict: &CMat, y: &CVec, structure: &[(usize, usize)]) -> Result<DecodeResult> {
    let cols: usize = structure.iter().map(|(s, k)| s * k).sum();
    if dict.ncols() != cols || dict.nrows() != y.len() {
        return domain(format!(
            "dictionary is {}x{}, structure implies {} columns and {} rows",
            dict.nrows(),
            dict.ncols(),
            cols,
            y.len()
        ));
    }
    let sv = singular_values(dict);
    let condition = match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    };
    let ridge = condition > 1e8;
    let gram = dict.adjoint() * dict;
    let rhs = dict.adjoint() * y;
    let x = if cols == 0 {
        CVec::zeros(0)
    } else if ridge {
        let lambda = 1e-8 * gram.trace().re / cols as f64;
        let reg = &gram + CMat::identity(cols, cols).scale(lambda);
        reg.lu().solve(&rhs).ok_or_else(|| crate::Error::Numerical("ridge system is singular".into()))?
    } else {
        gram.lu().solve(&rhs).ok_or_else(|| crate::Error::Numerical("normal equations are singular".into()))?
    };

    let mut out = DecodeResult {
        messages: Vec::new(),
        gains: Vec::new(),
        symbols: Vec::new(),
        ser_per_user: Vec::new(),
        ser_aggregate: 0.0,
        no_energy: Vec::new(),
        condition,
        ridge,
    };
    let mut off = 0;
    for &(s, k) in structure {
        let block = CMat::from_fn(k, s, |j, l| x[off + l * k + j]);
        off += s * k;
        if s == 0 || block.norm() == 0.0 {
            out.messages.push(vec![C64::new(0.0, 0.0); k]);
            out.gains.push(vec![C64::new(0.0, 0.0); s]);
            out.no_energy.push(true);
            continue;
        }
        let (_, vecs) = hermitian_eig_desc(&(&block * block.adjoint()))?;
        let f = anchor_phase(&vecs.column(0).into_owned());
        let gains = (0..s).map(|l| f.dotc(&block.column(l).into_owned())).collect();
        out.messages.push(f.iter().copied().collect());
        out.gains.push(gains);
        out.no_energy.push(false);
    }
    Ok(out)
}

fn nearest_odd_level(v: f64) -> i8 {
    let r = 2.0 * (v / 2.0).floor() + 1.0;
    r.clamp(-7.0, 7.0) as i8
}

/// Demaps a unit-norm message onto canonical 8-ASK levels.
///
/// The common phase is estimated from `arg Σ f_j²` (the real-valued
/// message makes every `f_j²` share it). The unknown amplitude scale is
/// searched exactly: rounding `α·x` to the odd levels changes only where
/// `α|x_j|` crosses 2, 4 or 6, so one candidate per interval suffices. The
/// candidate with the largest normalized correlation wins, smaller `α` on
/// ties.
pub fn demap_ask8(f: &[C64]) -> Vec<i8> {
    let k = f.len();
    if k == 0 {
        return Vec::new();
    }
    let sq: C64 = f.iter().map(|z| z * z).sum();
    let rot = crate::linalg::cis(-0.5 * sq.arg());
    let x: Vec<f64> = f.iter().map(|z| (z * rot).re).collect();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xn == 0.0 {
        return vec![1; k];
    }

    let mut breaks: Vec<f64> = x
        .iter()
        .filter(|v| v.abs() > 0.0)
        .flat_map(|v| [2.0, 4.0, 6.0].map(|m| m / v.abs()))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut alphas = Vec::with_capacity(breaks.len() + 1);
    alphas.push(breaks.first().map_or(1.0, |b| 0.5 * b));
    for w in breaks.windows(2) {
        alphas.push(0.5 * (w[0] + w[1]));
    }
    if let Some(&last) = breaks.last() {
        alphas.push(last * 1.5);
    }

    let mut best: Option<(f64, Vec<i8>)> = None;
    for a in alphas {
        let s: Vec<i8> = x.iter().map(|v| nearest_odd_level(a * v)).collect();
        let dot: f64 = s.iter().zip(&x).map(|(si, xi)| f64::from(*si) * xi).sum();
        let sn = s.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        let score = dot.abs() / (sn * xn);
        if best.as_ref().is_none_or(|(b, _)| score > *b + 1e-12) {
            best = Some((score, s));
        }
    }
    let mut s = best.map(|b| b.1).unwrap_or_else(|| vec![1; k]);
    canonicalize_levels(&mut s);
    s
}

/// Demaps every user's message and scores it against the scene's symbols.
/// Users flagged with no energy count as entirely wrong.
pub fn symbols_and_ser(result: &mut DecodeResult, scene: &Scene) -> Result<()> {
    if scene.users.len() != result.messages.len() {
        return domain("scene and decode result disagree on the user count");
    }
    let mut symbols = Vec::new();
    let mut ser = Vec::new();
    for (i, user) in scene.users.iter().enumerate() {
        let Some(truth) = &user.symbols else {
            return domain(format!("user {} has no constellation symbols", i + 1));
        };
        if result.no_energy[i] {
            symbols.push(vec![0; truth.len()]);
            ser.push(1.0);
            continue;
        }
        let est = demap_ask8(&result.messages[i]);
        let wrong = est.iter().zip(truth).filter(|(a, b)| a != b).count();
        ser.push(wrong as f64 / truth.len() as f64);
        symbols.push(est);
    }
    let ks: Vec<usize> = scene.users.iter().map(|u| u.message.len()).collect();
    result.ser_aggregate = aggregate_ser(&ser, &ks);
    result.ser_per_user = ser;
    result.symbols = symbols;
    Ok(())
}

/// `Σ_i k_i SER_i / Σ_i k_i`.
pub fn aggregate_ser(ser: &[f64], ks: &[usize]) -> f64 {
    let total: usize = ks.iter().sum();
    if total == 0 {
        return 0.0;
    }
    ser.iter().zip(ks).map(|(s, &k)| s * k as f64).sum::<f64>() / total as f64
}

/// Dictionary, least squares and (for ASK scenes) symbol error rates.
pub fn decode(meas: &MeasurementSet, zetas: &[Vec<Zeta>]) -> Result<DecodeResult> {
    let cbs = meas.codebooks();
    let dict = build_dictionary(zetas, &cbs, meas.dims)?;
    let structure: Vec<(usize, usize)> = zetas.iter().zip(&cbs).map(|(z, cb)| (z.len(), cb.k())).collect();
    let mut res = recover_messages(&dict, &meas.y, &structure)?;
    if meas.scene.users.iter().all(|u| u.symbols.is_some()) {
        symbols_and_ser(&mut res, &meas.scene)?;
    }
    Ok(res)
}
