from bivirus import StateVector, full_report, integrate
from bivirus.plots import plot_phase_portrait, plot_sweep, plot_trajectory
from bivirus.experiments import SweepSpec, basin_sweep


def test_trajectory_figures(two_node_system, tmp_path):
    traj = integrate(two_node_system, StateVector([0.1, 0.1], [0.05, 0.05]), 50.0)
    linear = tmp_path / "traj.png"
    logged = tmp_path / "traj_log.png"
    plot_trajectory(traj, linear, title="demo")
    plot_trajectory(traj, logged, logx=True)
    assert linear.stat().st_size > 1000
    assert logged.stat().st_size > 1000


def test_phase_portrait_with_equilibria(two_node_system, tmp_path):
    reports = full_report(two_node_system)
    trajs = [
        ("run1", integrate(two_node_system, StateVector([0.1, 0.1], [0.05, 0.05]), 50.0)),
        ("run2", integrate(two_node_system, StateVector([0.09, 0.09], [0.06, 0.06]), 50.0)),
    ]
    path = tmp_path / "phase.png"
    plot_phase_portrait(trajs, path, equilibria=reports)
    assert path.stat().st_size > 1000


def test_sweep_figure(two_node_system, tmp_path):
    result = basin_sweep(two_node_system, SweepSpec(resolution=5), threads=1)
    path = tmp_path / "sweep.png"
    plot_sweep(result, path, title="basins")
    assert path.stat().st_size > 1000
