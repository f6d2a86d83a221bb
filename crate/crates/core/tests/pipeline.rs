use std::f64::consts::PI;
use std::sync::Arc;

use orrlab_core::evolve::{run, InitialData, Simulation, Trajectory};
use orrlab_core::lyapunov::{dissipation_residual, monotonicity_report, DiagnosticsConfig, Recorder};
use orrlab_core::profiles::{ChannelConfig, ProfileSpec, ShearProfile};

fn simulate(spec: ProfileSpec, channel: ChannelConfig, data: InitialData, t_end: f64, cfg: DiagnosticsConfig) -> Recorder {
    let profile = Arc::new(ShearProfile::build(&spec, &channel).unwrap());
    let mut sim = Simulation::with_initial_data(profile, channel.grid().unwrap(), &[1.0], &data).unwrap();
    let mut rec = Recorder::new(&sim, cfg).unwrap();
    run(&mut sim, 0.02, t_end, 5, |s| rec.observe(s)).unwrap();
    rec
}

#[test]
fn small_bump_on_the_box_keeps_the_ladder_monotone() {
    let rec = simulate(
        ProfileSpec::bump(1e-4, 0.0, 2.0),
        ChannelConfig::infinite(2.0 * PI, 10.0, 128),
        InitialData::Gaussian { center: 0.0, width: 1.0, amplitude: 1.0 },
        10.0,
        DiagnosticsConfig { j_max: 3, ..DiagnosticsConfig::default() },
    );
    let ladder = rec.ladder(1.0).unwrap();
    for r in monotonicity_report(&ladder.times, &ladder.values, 1e-10) {
        assert!(r.first_violation.is_none(), "E_{} increased by {:e}", r.j, r.max_increment);
    }
    let hm1 = rec.trajectory.column("hm1_sq").unwrap();
    let d = dissipation_residual(&ladder.times, &ladder.series(0), &hm1).unwrap();
    assert!(d.c_fit > 0.0);
}

#[test]
fn finite_channel_run_has_consistent_wall_data() {
    let rec = simulate(
        ProfileSpec::sine(0.02),
        ChannelConfig::finite(2.0 * PI, 257),
        InitialData::Sine { mode: 1, amplitude: 1.0 },
        4.0,
        DiagnosticsConfig { j_max: 2, ..DiagnosticsConfig::default() },
    );
    let traj = &rec.trajectory;
    let (int, fd) = (traj.column("neumann0").unwrap(), traj.column("neumann0_fd").unwrap());
    for (a, b) in int.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-3 * a.abs().max(1e-3), "{a} vs {b}");
    }
    let lower = traj.column("lower_ratio").unwrap();
    assert!(lower.iter().all(|v| *v >= 1.0 - 1e-12));
}

#[test]
fn compact_profile_confines_the_deviation() {
    let rec = simulate(
        ProfileSpec::bump(0.01, 0.5, 0.15),
        ChannelConfig::finite(2.0 * PI, 129),
        InitialData::Bump { center: 0.5, width: 0.15, amplitude: 1.0 },
        2.0,
        DiagnosticsConfig { j_max: 1, support_interval: Some([0.34, 0.66]), ..DiagnosticsConfig::default() },
    );
    let drift = rec.trajectory.column("support_drift").unwrap();
    assert!(drift.iter().all(|d| *d == 0.0));
}

#[test]
fn series_round_trips_through_csv() {
    let rec = simulate(
        ProfileSpec::couette(),
        ChannelConfig::finite(2.0 * PI, 65),
        InitialData::Sine { mode: 2, amplitude: 0.5 },
        1.0,
        DiagnosticsConfig { j_max: 1, ..DiagnosticsConfig::default() },
    );
    let mut first = Vec::new();
    rec.trajectory.write_csv(&mut first).unwrap();
    let back = Trajectory::read_csv(first.as_slice()).unwrap();
    let mut second = Vec::new();
    back.write_csv(&mut second).unwrap();
    assert_eq!(first, second);
    assert_eq!(back.rows, rec.trajectory.rows);
}
