//! Regenerate the bundled synthetic sample under `data/sample/`.
//!
//! ```text
//! cargo run -p stormsafe-core --example make_sample -- data/sample
//! ```

use std::fs;
use std::path::PathBuf;

use rand_distr::{Distribution, Normal};
use stormsafe_core::gev::{draw_series, GevParams};
use stormsafe_core::rng::substream;
use stormsafe_core::stats::{mean, sample_sd};
use stormsafe_core::timeseries_io::write_annual_csv;

const ROOT_SEED: u64 = 20_210_301;
const HIST: std::ops::RangeInclusive<i32> = 1951..=2018;
const PROJ: std::ops::RangeInclusive<i32> = 2019..=2100;
const MODEL_END: i32 = 2090;

/// Station truth, location trend per standardized MDR unit.
const STATION: GevParams = GevParams { mu0: 3.0, a_mu: 0.15, sigma: 0.9, xi: 0.1 };

/// (scale bias, trend sensitivity) for each synthetic climate model.
const MODELS: [(f64, f64); 9] = [
    (0.80, 0.10),
    (1.25, 0.18),
    (0.95, 0.05),
    (1.10, 0.22),
    (0.70, 0.14),
    (1.05, 0.12),
    (0.90, 0.26),
    (1.30, 0.08),
    (1.15, 0.16),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/sample".into()));
    fs::create_dir_all(out.join("models"))?;

    let hist: Vec<i32> = HIST.collect();
    let proj: Vec<i32> = PROJ.collect();

    let mut rng = substream(ROOT_SEED, "mdr");
    let noise = Normal::new(0.0, 0.12)?;
    let mdr_hist: Vec<f64> = hist
        .iter()
        .map(|y| 27.0 + 0.012 * (*y - 1951) as f64 + noise.sample(&mut rng))
        .collect();
    let mdr_proj: Vec<f64> = proj
        .iter()
        .map(|y| 27.82 + 0.012 * (*y - 2018) as f64 + noise.sample(&mut rng))
        .collect();

    let mut rng = substream(ROOT_SEED, "nao");
    let nao_hist: Vec<f64> = hist.iter().map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
    let nao_proj: Vec<f64> = proj.iter().map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();

    // covariate as the fit sees it: z-scored on the historical window
    let (m, sd) = (mean(&mdr_hist), sample_sd(&mdr_hist));
    let z = |v: &f64| (v - m) / sd;
    let z_hist: Vec<f64> = mdr_hist.iter().map(z).collect();
    let z_all: Vec<f64> = mdr_hist.iter().chain(&mdr_proj).map(z).collect();

    let mut rng = substream(ROOT_SEED, "station");
    let obs = draw_series(&STATION, &z_hist, &mut rng);

    write_annual_csv(out.join("station_maxima.csv"), &hist, &obs)?;
    write_annual_csv(out.join("mdr_sst.csv"), &hist, &mdr_hist)?;
    write_annual_csv(out.join("mdr_sst_projection.csv"), &proj, &mdr_proj)?;
    write_annual_csv(out.join("nao.csv"), &hist, &nao_hist)?;
    write_annual_csv(out.join("nao_projection.csv"), &proj, &nao_proj)?;

    let model_years: Vec<i32> = (*HIST.start()..=MODEL_END).collect();
    for (k, (bias, trend)) in MODELS.iter().enumerate() {
        let params = GevParams {
            mu0: STATION.mu0 * bias,
            a_mu: *trend,
            sigma: STATION.sigma * bias,
            xi: STATION.xi,
        };
        let mut rng = substream(ROOT_SEED, &format!("model_{}", k + 1));
        let xs = draw_series(&params, &z_all[..model_years.len()], &mut rng);
        write_annual_csv(out.join("models").join(format!("model_{}.csv", k + 1)), &model_years, &xs)?;
    }

    // stationary heavy right tail for checking posterior-mean vs MAP levels
    let heavy = GevParams::stationary(20.0, 6.0, 0.35);
    let years: Vec<i32> = (1961..=2010).collect();
    let mut rng = substream(ROOT_SEED, "heavy_tail");
    let xs = draw_series(&heavy, &vec![0.0; years.len()], &mut rng);
    write_annual_csv(out.join("heavy_tail.csv"), &years, &xs)?;

    println!("wrote sample data to {}", out.display());
    Ok(())
}
