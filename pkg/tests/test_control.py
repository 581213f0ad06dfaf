import dataclasses
import math

import numpy as np
import pytest

from fairwaysim.control import (
    DwaDriver,
    SimplePid,
    ThrustSpeedTable,
    channel_carrot,
    default_driver_config,
    navigate,
    run_speed_hold,
)
from fairwaysim.dynamics import (
    ZERO_WIND,
    CurrentSpec,
    Pose,
    Thruster,
    load_model,
    state_at_rest,
    step,
    thruster_allocation,
)
from fairwaysim.world import ChannelLayout, PcgParams, generate_channel, moored_rectangles


@pytest.fixture(scope="module")
def ferry():
    return load_model("harbor-ferry-5m")


@pytest.fixture(scope="module")
def table(ferry):
    return ThrustSpeedTable.calibrate(ferry)


class TestSimplePid:
    def test_zero_gains_zero_output(self):
        pid = SimplePid(0.0, 0.0, 0.0)
        assert pid.compute(1.0, 0.0) == 0.0
        assert pid.compute(5.0, -3.0) == 0.0

    def test_proportional_term(self):
        pid = SimplePid(0.5, 0.0, 0.0)
        assert pid.compute(1.0, 0.0) == pytest.approx(0.5)
        assert pid.compute(0.4, 0.0) == pytest.approx(0.2)

    def test_integral_accumulates(self):
        pid = SimplePid(0.0, 1.0, 0.0, dt=0.1)
        outs = [pid.compute(1.0, 0.0) for _ in range(5)]
        assert outs == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])

    def test_derivative_on_error_change(self):
        pid = SimplePid(0.0, 0.0, 0.2, dt=0.1)
        assert pid.compute(1.0, 0.0) == 0.0  # no history on the first tick
        assert pid.compute(1.5, 0.0) == pytest.approx(0.2 * 0.5 / 0.1)

    def test_output_clamped(self):
        pid = SimplePid(10.0, 0.0, 0.0)
        assert pid.compute(10.0, 0.0) == 1.0
        assert pid.compute(-10.0, 0.0) == 0.0

    def test_anti_windup_recovers_immediately(self):
        # a naive integrator would need ~90 ticks to unwind after a long
        # saturated stretch; the clamped one reacts on the next tick
        pid = SimplePid(1.5, 1.0, 0.0, dt=0.1)
        for _ in range(1000):
            assert pid.compute(1.0, 0.0) == 1.0
        assert pid.compute(0.0, 0.5) < 1.0

    def test_reset_clears_state(self):
        pid = SimplePid(0.0, 1.0, 0.0, dt=0.1)
        pid.compute(1.0, 0.0)
        pid.reset()
        assert pid.compute(1.0, 0.0) == pytest.approx(0.1)

    def test_rejects_bad_construction(self):
        with pytest.raises(ValueError):
            SimplePid(1.0, 0.0, 0.0, dt=0.0)
        with pytest.raises(ValueError):
            SimplePid(1.0, 0.0, 0.0, out_min=1.0, out_max=0.0)


class TestSpeedHold:
    def test_holds_target_speed(self, ferry):
        _, speeds, _ = run_speed_hold(ferry, 0.51, duration=40.0)
        tail = speeds[-20:]
        assert np.all(np.abs(tail - 0.51) <= 0.05 * 0.51)

    def test_zero_target_keeps_thrust_zero(self, ferry):
        _, speeds, thrusts = run_speed_hold(ferry, 0.0, duration=5.0)
        assert np.all(thrusts == 0.0)
        assert np.all(speeds < 1e-9)

    def test_zero_gains_keep_vessel_still(self, ferry):
        _, speeds, thrusts = run_speed_hold(ferry, 0.51, duration=5.0,
                                            gains=(0.0, 0.0, 0.0))
        assert np.all(thrusts == 0.0)
        assert np.all(speeds < 1e-9)

    def test_logs_one_row_per_tick(self, ferry):
        times, speeds, thrusts = run_speed_hold(ferry, 0.3, duration=3.0)
        assert len(times) == len(speeds) == len(thrusts) == 30
        assert np.all(np.diff(times) > 0)


class TestThrustSpeedTable:
    def test_speeds_monotone_from_rest(self, table):
        assert table.speeds[0] == 0.0
        assert np.all(np.diff(table.speeds) > 0)

    def test_matches_drag_balance_oracle(self, ferry, table):
        # steady surge speed solves d_lin u + d_quad u^2 = F for this hull,
        # since its sway and yaw stay identically zero under straight thrust
        d_lin = ferry.linear_damping[0, 0]
        d_quad = ferry.quadratic_damping[0]
        f_max = ferry.thrusters[0].max_force
        for thr, measured in zip(table.thrusts[1:], table.speeds[1:]):
            analytic = (-d_lin + math.sqrt(d_lin**2 + 4 * d_quad * f_max * thr)) / (2 * d_quad)
            assert measured == pytest.approx(analytic, rel=5e-3)

    def test_inverse_round_trip(self, table):
        for thrust in (0.0, 0.137, 0.5, 0.82, 1.0):
            speed = table.speed_for_thrust(thrust)
            assert table.thrust_for_speed(speed) == pytest.approx(thrust, abs=1e-9)

    def test_lookup_saturates(self, table):
        assert table.thrust_for_speed(99.0) == 1.0
        assert table.thrust_for_speed(-1.0) == 0.0
        assert table.speed_for_thrust(2.0) == table.max_speed

    def test_rejects_bad_tables(self):
        with pytest.raises(ValueError):
            ThrustSpeedTable([0.0, 0.5, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError):
            ThrustSpeedTable([0.0, 0.5, 0.5], [0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            ThrustSpeedTable([0.0, 0.5, 1.0], [0.0, 1.0, 0.5])


class TestDwaDriver:
    def test_thrust_from_table(self, ferry, table):
        driver = DwaDriver(params=ferry, table=table,
                           config=default_driver_config(table))
        cmd = driver.command(v_desired=1.0, omega_desired=0.0, r_measured=0.0)
        assert cmd.thrust[0] == pytest.approx(table.thrust_for_speed(1.0))
        assert cmd.angle[0] == 0.5

    def test_steering_moment_sign_stern_thruster(self, ferry, table):
        # ferry thruster sits astern: a positive turn-rate request must
        # still produce a positive yaw moment
        driver = DwaDriver(params=ferry, table=table,
                           config=default_driver_config(table))
        cmd = driver.command(1.0, 0.3, 0.0)
        tau = thruster_allocation(cmd, ferry)
        assert tau[2] > 0
        cmd = driver.command(1.0, -0.3, 0.0)
        tau = thruster_allocation(cmd, ferry)
        assert tau[2] < 0

    def test_steering_moment_sign_bow_thruster(self, ferry, table):
        bow = dataclasses.replace(
            ferry,
            thrusters=(Thruster(dx=2.0, dy=0.0, max_force=500.0,
                                angle_min=-math.pi / 2, angle_max=math.pi / 2),),
        )
        driver = DwaDriver(params=bow, table=table,
                           config=default_driver_config(table))
        cmd = driver.command(1.0, 0.3, 0.0)
        tau = thruster_allocation(cmd, bow)
        assert tau[2] > 0

    def test_angle_saturates_in_unit_range(self, ferry, table):
        driver = DwaDriver(params=ferry, table=table,
                           config=default_driver_config(table))
        cmd = driver.command(1.0, 50.0, 0.0)
        assert 0.0 <= cmd.angle[0] <= 1.0

    def test_positive_turn_request_turns_vessel(self, ferry, table):
        driver = DwaDriver(params=ferry, table=table,
                           config=default_driver_config(table))
        current = CurrentSpec()
        state = state_at_rest(Pose(0, 0, 0), current)
        for _ in range(1000):
            cmd = driver.command(1.0, 0.2, state.nu_r.r)
            state = step(state, cmd, current, ZERO_WIND, ferry)
        assert state.nu_r.r > 0.05

    def test_rejects_unsupported_layouts(self, ferry, table):
        cfg = default_driver_config(table)
        two = dataclasses.replace(ferry, thrusters=ferry.thrusters * 2)
        with pytest.raises(ValueError):
            DwaDriver(params=two, table=table, config=cfg)
        mid = dataclasses.replace(
            ferry,
            thrusters=(Thruster(dx=0.0, dy=0.0, max_force=500.0,
                                angle_min=-1.0, angle_max=1.0),),
        )
        with pytest.raises(ValueError):
            DwaDriver(params=mid, table=table, config=cfg)

    def test_plan_speed_limit_caps_thrust(self, ferry, table):
        driver = DwaDriver(params=ferry, table=table,
                           config=default_driver_config(table))
        state = state_at_rest(Pose(0, 0, 0), CurrentSpec())
        goal = np.array([100.0, 0.0])
        cmd_free, _ = driver.plan(state, CurrentSpec(), goal, np.empty((0, 2)))
        cmd_slow, _ = driver.plan(state, CurrentSpec(), goal, np.empty((0, 2)),
                                  speed_limit=0.05)
        assert cmd_slow.thrust[0] <= cmd_free.thrust[0]
        assert cmd_slow.thrust[0] <= table.thrust_for_speed(0.05) + 1e-9


class TestChannelCarrot:
    def _straight(self):
        pts = np.array([[0.0, 0.0], [100.0, 0.0], [200.0, 0.0]])
        return ChannelLayout(centerline=pts, halfwidths=np.full(3, 20.0),
                             headings=np.zeros(2))

    def test_lookahead_along_straight_channel(self):
        layout = self._straight()
        carrot = channel_carrot(layout, (30.0, 5.0), 25.0)
        assert carrot == pytest.approx([55.0, 0.0])

    def test_clamps_to_channel_end(self):
        layout = self._straight()
        carrot = channel_carrot(layout, (190.0, -3.0), 50.0)
        assert carrot == pytest.approx([200.0, 0.0])

    def test_projects_before_start(self):
        layout = self._straight()
        carrot = channel_carrot(layout, (-40.0, 10.0), 30.0)
        assert carrot == pytest.approx([30.0, 0.0])

    def test_follows_bend(self):
        pts = np.array([[0.0, 0.0], [100.0, 0.0], [100.0, 100.0]])
        layout = ChannelLayout(centerline=pts, halfwidths=np.full(3, 20.0),
                               headings=np.array([0.0, math.pi / 2]))
        carrot = channel_carrot(layout, (95.0, 2.0), 30.0)
        # 5 m left on the first leg, 25 m up the second
        assert carrot == pytest.approx([100.0, 25.0])


class TestNavigate:
    def test_channel_transit_clean(self, ferry, table):
        # seed 8 is the pocket-trap regression case
        world = generate_channel(PcgParams(n_segments=6, seed=8))
        world = world.with_extra_polygons(
            moored_rectangles(world.channel, count=4, seed=8))
        res = navigate(world, ferry, table)
        assert res.reached_goal
        assert not res.collided
        assert res.aborted == ""
        assert res.min_clearance > ferry.length / 2.0
        assert np.all(np.diff(res.trajectory[:, 0]) > 0)

    def test_time_limit_reported(self, ferry, table):
        world = generate_channel(PcgParams(n_segments=6, seed=3))
        res = navigate(world, ferry, table, t_max=5.0)
        assert not res.reached_goal
        assert res.aborted == "time limit"

    def test_candidate_log_optional(self, ferry, table):
        world = generate_channel(PcgParams(n_segments=6, seed=3))
        res = navigate(world, ferry, table, t_max=5.0, record_candidates=True)
        assert len(res.plan_log) >= 1
        assert len(res.plan_log[0].candidates) >= 1
