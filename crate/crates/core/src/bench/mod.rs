//! Evaluation harness: synthetic data, retrieval metrics and experiments.

pub mod experiment;
mod metrics;
mod synthetic;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentOutput, MetricRecord, Report, StageError};
pub use metrics::{average_precision, average_precision_with_total, eval_map, top_k_accuracy, RetrievalRun};
pub use synthetic::{class_means, gen_synthetic, SyntheticSpec};

/// Formats `x` with `digits` significant digits in plain or scientific notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.prec$e}", prec = digits.saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::format_sig;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(169.0, 9), "169.000000");
        assert_eq!(format_sig(0.000123456789123, 9), "0.000123456789");
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(1.5e12, 3), "1.50e12");
    }
}
