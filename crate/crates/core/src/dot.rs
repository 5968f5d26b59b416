//! Batched secure dot products between the shared prompt and every shared
//! document embedding.
//!
//! One Beaver-style correlation per query: a prompt-side mask vector
//! `ra[n]`, the database-side mask matrix `rb[j][n]` (fixed per database,
//! since the public document openings `e[j][n] = x[j][n] - rb[j][n]` are
//! precomputed at ingestion), and shared products `rab[j][n] = ra[n] *
//! rb[j][n]`. Online, the servers open only the `m` prompt differences
//! `d[n] = p[n] - ra[n]` and finish locally, so per-query intra-server
//! distance traffic is `O(m)`.
//!
//! Distances are exact: coordinates are encoded at scale `2^(f-1)`, so the
//! full product sum stays inside the centered range of `F_p` and no
//! truncation of shares is ever needed.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Fe, FieldParams};

/// One party's share of the per-query correlation.
#[derive(Debug, Clone)]
pub struct DotCorrelation {
    pub party: u8,
    /// `[ra]` share, length `m`.
    pub prompt_mask: Vec<Fe>,
    /// `[rab]` share, length `docs * m`, row-major by document.
    pub products: Vec<Fe>,
}

/// This party's contribution to opening the prompt differences:
/// `[p]_i - [ra]_i` per dimension.
pub fn prompt_mask_contrib(
    params: &FieldParams,
    prompt_share: &[Fe],
    corr: &DotCorrelation,
) -> Result<Vec<Fe>> {
    if prompt_share.len() != corr.prompt_mask.len() {
        return Err(Error::Protocol(format!(
            "prompt dimension {} != correlation dimension {}",
            prompt_share.len(),
            corr.prompt_mask.len()
        )));
    }
    Ok(prompt_share
        .iter()
        .zip(&corr.prompt_mask)
        .map(|(&p, &r)| params.sub(p, r))
        .collect())
}

/// Public document openings `e[j][n] = x[j][n] - rb[j][n]`, computed at
/// ingestion from both document shares and the mask matrix. Equivalent to
/// opening `[x] - [rb]` online, done once because the database is static.
pub fn precompute_doc_masks(
    params: &FieldParams,
    doc_share0: &[Fe],
    doc_share1: &[Fe],
    rb: &[Fe],
) -> Result<Vec<Fe>> {
    if doc_share0.len() != doc_share1.len() || doc_share0.len() != rb.len() {
        return Err(Error::Ingest("document shares and mask matrix sizes differ".into()));
    }
    Ok(doc_share0
        .iter()
        .zip(doc_share1)
        .zip(rb)
        .map(|((&a, &b), &r)| params.sub(params.add(a, b), r))
        .collect())
}

/// Finish the batched dot product once the prompt differences are public.
///
/// For each document `j`, the share of the product at dimension `n` is
/// `[rab] + e * [ra] + d * [rb] + i * d * e` (party 1 absorbs the public
/// term); summing over `n` gives this party's distance share `[d_j]`.
pub fn finish(
    params: &FieldParams,
    party: u8,
    prompt_open: &[Fe],
    doc_masks: &[Fe],
    rb_share: &[Fe],
    corr: &DotCorrelation,
) -> Result<Vec<Fe>> {
    let m = prompt_open.len();
    if m != corr.prompt_mask.len() {
        return Err(Error::Protocol("prompt opening has wrong dimension".into()));
    }
    if doc_masks.len() != rb_share.len() || doc_masks.len() != corr.products.len() {
        return Err(Error::Protocol("correlation is not sized docs x m".into()));
    }
    if party != corr.party {
        return Err(Error::PartyMismatch { expected: corr.party, got: party });
    }
    let docs = doc_masks.len() / m;
    if docs * m != doc_masks.len() {
        return Err(Error::Protocol("mask matrix not a multiple of m".into()));
    }
    let out: Vec<Fe> = (0..docs)
        .into_par_iter()
        .map(|j| {
            let row = j * m;
            let mut acc: Fe = 0;
            for n in 0..m {
                let d = prompt_open[n];
                let e = doc_masks[row + n];
                let mut term = corr.products[row + n];
                term = params.add(term, params.mul(e, corr.prompt_mask[n]));
                term = params.add(term, params.mul(d, rb_share[row + n]));
                if party == 1 {
                    term = params.add(term, params.mul(d, e));
                }
                acc = params.add(acc, term);
            }
            acc
        })
        .collect();
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::testutil::gen_correlation;
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn encode_all(params: &FieldParams, xs: &[f64]) -> Vec<Fe> {
        xs.iter().map(|&v| params.encode_coord(v).unwrap()).collect()
    }

    /// Exact integer dot of the encoded vectors, the independent oracle.
    fn oracle_dots(params: &FieldParams, prompt: &[f64], docs: &[f64], m: usize) -> Vec<i128> {
        let pe: Vec<i128> =
            prompt.iter().map(|&v| params.center(params.encode_coord(v).unwrap())).collect();
        docs.chunks(m)
            .map(|row| {
                row.iter()
                    .zip(&pe)
                    .map(|(&v, &a)| a * params.center(params.encode_coord(v).unwrap()))
                    .sum()
            })
            .collect()
    }

    fn run_dot(
        params: &FieldParams,
        prompt: &[f64],
        docs_data: &[f64],
        m: usize,
        zero_masks: bool,
        rng: &mut StdRng,
    ) -> Vec<Fe> {
        let docs = docs_data.len() / m;
        let tc = gen_correlation(params, docs, m, zero_masks, rng);
        let enc_p = encode_all(params, prompt);
        let enc_x = encode_all(params, docs_data);
        let (p0, p1) = crate::shares::share_vec(params, &enc_p, rng);
        let (x0, x1) = crate::shares::share_vec(params, &enc_x, rng);
        let masks = precompute_doc_masks(params, &x0.values, &x1.values, &tc.rb).unwrap();
        let c0 = prompt_mask_contrib(params, &p0.values, &tc.corr0).unwrap();
        let c1 = prompt_mask_contrib(params, &p1.values, &tc.corr1).unwrap();
        let opened: Vec<Fe> = c0.iter().zip(&c1).map(|(&a, &b)| params.add(a, b)).collect();
        if zero_masks {
            assert_eq!(opened, enc_p, "with zero masks the openings are the prompt");
            assert_eq!(masks, enc_x, "with zero masks the doc masks are the coordinates");
        }
        let d0 = finish(params, 0, &opened, &masks, &tc.rb0, &tc.corr0).unwrap();
        let d1 = finish(params, 1, &opened, &masks, &tc.rb1, &tc.corr1).unwrap();
        d0.iter().zip(&d1).map(|(&a, &b)| params.add(a, b)).collect()
    }

    fn unit_rows(rng: &mut StdRng, docs: usize, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(docs * m);
        for _ in 0..docs {
            let row: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.extend(row.iter().map(|v| v / norm));
        }
        out
    }

    #[test]
    fn zero_prompt_gives_zero_distances() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(1);
        let m = 8;
        let docs = unit_rows(&mut rng, 4, m);
        let prompt = vec![0.0; m];
        for d in run_dot(&params, &prompt, &docs, m, false, &mut rng) {
            assert_eq!(d, 0);
        }
    }

    #[test]
    fn matches_fixed_point_oracle() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(2);
        let m = 8;
        let docs_data = unit_rows(&mut rng, 8, m);
        let prompt: Vec<f64> = {
            let r = unit_rows(&mut rng, 1, m);
            r
        };
        let got = run_dot(&params, &prompt, &docs_data, m, false, &mut rng);
        let want = oracle_dots(&params, &prompt, &docs_data, m);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(params.center(*g), *w, "exact agreement with the integer oracle");
        }
        // and against the real dot within (m+1) units of 2^-f
        let tol = (m as f64 + 1.0) * (-(params.f as f64)).exp2();
        for (j, g) in got.iter().enumerate() {
            let real: f64 = prompt
                .iter()
                .zip(&docs_data[j * m..(j + 1) * m])
                .map(|(a, b)| a * b)
                .sum();
            assert!((params.decode_dist(*g) - real).abs() <= tol);
        }
    }

    #[test]
    fn self_similarity_decodes_to_one() {
        let params = FieldParams::default();
        let m = 8;
        let v = vec![(1.0 / (m as f64).sqrt()); m];
        let mut rng = StdRng::seed_from_u64(3);
        let mut docs_data = v.clone();
        docs_data.extend(unit_rows(&mut rng, 3, m));
        let got = run_dot(&params, &v, &docs_data, m, false, &mut rng);
        let cos = params.decode_dist(got[0]);
        assert!((cos - 1.0).abs() < 1e-6, "self dot decodes to cosine 1, got {cos}");
    }

    #[test]
    fn offline_and_online_openings_agree() {
        // e computed from shares at ingestion equals e computed by an
        // online exchange of [x]-[rb] contributions; N=16, m=8.
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(4);
        let m = 8;
        let docs = 16;
        let data = unit_rows(&mut rng, docs, m);
        let enc = encode_all(&params, &data);
        let (x0, x1) = crate::shares::share_vec(&params, &enc, &mut rng);
        let tc = gen_correlation(&params, docs, m, false, &mut rng);
        let offline = precompute_doc_masks(&params, &x0.values, &x1.values, &tc.rb).unwrap();
        let online: Vec<Fe> = (0..docs * m)
            .map(|i| {
                let open0 = params.sub(x0.values[i], tc.rb0[i]);
                let open1 = params.sub(x1.values[i], tc.rb1[i]);
                params.add(open0, open1)
            })
            .collect();
        assert_eq!(offline, online);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let params = FieldParams::default();
        let mut rng = StdRng::seed_from_u64(5);
        let tc = gen_correlation(&params, 2, 4, false, &mut rng);
        assert!(prompt_mask_contrib(&params, &[1, 2, 3], &tc.corr0).is_err());
        assert!(finish(&params, 0, &[1, 2, 3, 4], &[0; 4], &[0; 8], &tc.corr0).is_err());
    }
}
