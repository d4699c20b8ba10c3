//! Completion-time and energy estimates used by the allocator.

/// CPU time for `instructions` on a node: `I * CPI * CCT`.
pub fn processing_time(instructions: f64, cpi: f64, cct_s: f64) -> f64 {
    instructions * cpi * cct_s
}

/// Remaining CPU time of a partly executed task.
pub fn residual_time(instructions: f64, executed: f64, cpi: f64, cct_s: f64) -> f64 {
    (instructions - executed).max(0.0) * cpi * cct_s
}

/// Work ahead of a new task on a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningTask {
    pub instructions: f64,
    pub executed: f64,
}

/// Queue waiting time: residual time of the running task, CPU time of every
/// queued task and `(m + 2) * phi` of scheduler overhead for `m` queued tasks.
pub fn queue_time(
    running: Option<RunningTask>,
    queued_instructions: &[f64],
    cpi: f64,
    cct_s: f64,
    phi_s: f64,
) -> f64 {
    let residual = running
        .map(|r| residual_time(r.instructions, r.executed, cpi, cct_s))
        .unwrap_or(0.0);
    let waiting: f64 = queued_instructions
        .iter()
        .map(|&i| processing_time(i, cpi, cct_s))
        .sum();
    residual + waiting + (queued_instructions.len() as f64 + 2.0) * phi_s
}

/// Execution time is processing time plus queue time.
pub fn execution_time(e_pt: f64, e_qt: f64) -> f64 {
    e_pt + e_qt
}

/// Completion time is execution time plus data transfer time.
pub fn completion_time(e_et: f64, e_dtt: f64) -> f64 {
    e_et + e_dtt
}

/// Dynamic CPU power `A * C * V^2 * F`.
pub fn dynamic_power(active_gates: f64, capacitance_f: f64, voltage_v: f64, frequency_hz: f64) -> f64 {
    active_gates * capacitance_f * voltage_v * voltage_v * frequency_hz
}

/// CPU power per unit time: static plus dynamic.
pub fn cpu_power(p_static_w: f64, active_gates: f64, capacitance_f: f64, voltage_v: f64, frequency_hz: f64) -> f64 {
    p_static_w + dynamic_power(active_gates, capacitance_f, voltage_v, frequency_hz)
}

/// Energy estimate `alpha * E_PT + beta * packets`.
pub fn energy(alpha_w: f64, e_pt: f64, beta_j: f64, packets: u64) -> f64 {
    alpha_w * e_pt + beta_j * packets as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn processing_time_cases() {
        assert_eq!(processing_time(0.0, 2.0, 1e-9), 0.0);
        assert!((processing_time(1e6, 2.0, 1e-9) - 2e-3).abs() < 1e-15);
        let a = processing_time(5e5, 3.0, 1e-9);
        assert!((processing_time(5e5, 3.0, 2e-9) - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn queue_time_cases() {
        assert!((queue_time(None, &[], 2.0, 1e-9, 1e-3) - 2e-3).abs() < 1e-15);
        let half = RunningTask {
            instructions: 1e6,
            executed: 5e5,
        };
        assert!((queue_time(Some(half), &[], 2.0, 1e-9, 0.0) - 1e-3).abs() < 1e-15);
        // two queued tasks of 1 s each
        assert!((queue_time(None, &[1e9, 1e9], 1.0, 1e-9, 0.5) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn energy_cases() {
        let alpha = 0.1 + 1.0;
        assert!((energy(alpha, 2.0, 0.01, 100) - 3.2).abs() < 1e-12);
        assert!((energy(alpha, 2.0, 0.0, 999) - 2.2).abs() < 1e-12);
        assert_eq!(energy(alpha, 0.0, 0.01, 0), 0.0);
        assert!((cpu_power(0.1, 2.0, 0.5, 1.0, 1.0) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn completion_is_additive() {
        assert_eq!(completion_time(execution_time(1.5, 0.5), 0.5), 2.5);
    }
}
