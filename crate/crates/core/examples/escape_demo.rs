//! Minimal library walkthrough: five agents pinned on the strict saddle of
//! the bilinear logistic objective escape it through switching-grid
//! quantization noise, while exact exchange stays stuck forever.
//!
//! Run with: `cargo run -p dqopt --release --example escape_demo`

use dqopt::engine::{average_iterate, classify_point, run, Init, RunOptions};
use dqopt::mixing::MixingMatrix;
use dqopt::objectives::LogisticBilinear;
use dqopt::quantizer::{QuantizerScheme, QuantizerSpec};
use dqopt::schedule::{Mode, Schedule, ScheduleParams, StepsizeRule};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let obj = LogisticBilinear::homogeneous(5, 0.1)?;
    let net = MixingMatrix::metropolis_ring(5)?;
    let params = ScheduleParams::new(
        0.62,
        0.94,
        0.03,
        0.3,
        0.1,
        0.1,
        Mode::Practical { t0: 10, hold: 2200, n_holds: 2 },
    )?;
    let rule = StepsizeRule::DecreaseHold(Schedule::practical(params)?);
    let opts = RunOptions::new(5000, 42, Init::AtPoint(DVector::zeros(2)));

    for scheme in [QuantizerScheme::Switching, QuantizerScheme::Identity] {
        let quant = QuantizerSpec::new(scheme, 0.3, 9)?;
        let rec = run(&obj, &net, quant, rule.clone(), &opts)?;
        let last = rec.final_row();
        let avg = average_iterate(&rec.final_state);
        let class = classify_point(&obj, &avg, 0.1, 1.0, 400)?;
        println!(
            "{:>9}: F(x_bar) {:.4} -> {:.4}, consensus^2 {:.2e}, final class {}",
            scheme.name(),
            rec.rows[0].f_bar,
            last.f_bar,
            last.consensus_error_sq,
            class.name()
        );
    }
    Ok(())
}
