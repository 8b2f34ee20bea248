#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"
#include "doeforge/profiles.hpp"
#include "doeforge/refcell.hpp"

using namespace doeforge;
using namespace doeforge::profiles;
using doctest::Approx;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "doeforge_test_profiles";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool allEqual(const CurrentProfile& p, double value) {
  for (double c : p.currents())
    if (c != value) return false;
  return true;
}

}  // namespace

TEST_SUITE("profiles") {
  TEST_CASE("constant current examples") {
    const auto d = constantCurrent(1.0, 5.0, Direction::Discharge);
    CHECK(d.duration() == 3600.0);
    CHECK(d.size() == 3600);
    CHECK(allEqual(d, -5.0));
    const auto c = constantCurrent(2.0, 5.0, Direction::Charge);
    CHECK(c.duration() == 1800.0);
    CHECK(allEqual(c, 10.0));
    const auto slow = constantCurrent(0.05, 5.0, Direction::Discharge);
    CHECK(slow.duration() == Approx(72000.0));
    CHECK(allEqual(slow, -0.25));
    CHECK_THROWS_AS(constantCurrent(0.0, 5.0, Direction::Charge), ValidationError);
  }

  TEST_CASE("pulse pattern for one SoC point") {
    PulseSpec spec;
    spec.amplitudes = {5.0};
    spec.pulse_duration = 10.0;
    spec.rest_duration = 10.0;
    spec.soc_points = {1.0};
    const auto p = pulseProfile(spec);
    REQUIRE(p.size() == 40);
    for (int k = 0; k < 40; ++k) {
      const double expected = k < 10 ? 5.0 : k < 20 ? 0.0 : k < 30 ? -5.0 : 0.0;
      CHECK(p.currents()[static_cast<std::size_t>(k)] == expected);
    }
  }

  TEST_CASE("pulse segment counts") {
    PulseSpec spec;
    spec.amplitudes = {2.5, 5.0};
    spec.soc_points = {0.8, 0.6};
    const auto p = pulseProfile(spec);
    int segments = 0;
    double prev = std::nan("");
    for (double c : p.currents()) {
      if (c != prev) ++segments;
      prev = c;
    }
    // per point: repositioning discharge + 8 pulse/rest segments
    CHECK(segments == 2 * (1 + 8));

    spec.amplitudes.clear();
    const auto only = pulseProfile(spec);
    CHECK(allEqual(only, -5.0));
    CHECK(only.duration() == Approx(0.4 * 5.0 * 3600.0 / 5.0));

    spec.soc_points = {0.5};
    spec.start_soc = 0.4;
    CHECK_THROWS_AS(pulseProfile(spec), ValidationError);
    spec.start_soc = 1.0;
    spec.soc_points = {0.4, 0.6};
    CHECK_THROWS_AS(pulseProfile(spec), ValidationError);
  }

  TEST_CASE("zero-order-hold sampling") {
    CurrentProfile p({0.0, 10.0}, {1.0, 2.0}, {});
    CHECK(p.sample(5.0) == 1.0);
    CHECK(p.sample(10.0) == 2.0);
    CHECK(p.sample(11.0) == 0.0);
    CHECK(p.duration() == 10.0);
    const auto u = CurrentProfile::uniform({1.0, 2.0, 3.0}, 2.0, {});
    CHECK(u.duration() == 6.0);
    CHECK(u.sample(5.9) == 3.0);
    CHECK(u.sample(6.0) == 0.0);
  }

  TEST_CASE("construction validation") {
    CHECK_THROWS_AS(CurrentProfile({}, {}, {}), ValidationError);
    CHECK_THROWS_AS(CurrentProfile({1.0}, {1.0}, {}), ValidationError);
    CHECK_THROWS_AS(CurrentProfile({0.0, 0.0}, {1.0, 1.0}, {}), ValidationError);
    CHECK_THROWS_AS(CurrentProfile({0.0, 1.0}, {1.0, INFINITY}, {}), ValidationError);
  }

  TEST_CASE("load from CSV and error reporting") {
    const auto path = scratch("two.csv");
    io::writeTextFile(path, "t_s,current_a\n0,1.0\n1,-2.0\n");
    std::filesystem::remove(path.string() + ".meta.json");
    const auto p = loadProfile(path);
    CHECK(p.size() == 2);
    CHECK(p.duration() == 1.0);
    CHECK(p.currents()[1] == -2.0);

    const auto empty = scratch("empty.csv");
    io::writeTextFile(empty, "t_s,current_a\n");
    try {
      loadProfile(empty);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("empty profile") != std::string::npos);
    }

    const auto bad = scratch("bad.csv");
    io::writeTextFile(bad, "t_s,current_a\n0,1\n2,1\n1,1\n");
    try {
      loadProfile(bad);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    io::writeTextFile(bad, "t_s,current_a\n0,1\n1,abc\n");
    try {
      loadProfile(bad);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  TEST_CASE("sine round trip is bit exact") {
    std::vector<double> c;
    for (int k = 0; k < 1000; ++k) c.push_back(std::sin(2.0 * std::numbers::pi * 1.0 * k * 0.1));
    ProfileMeta meta;
    meta.name = "sine";
    meta.source = Source::Ai;
    meta.initial_soc = 0.3;
    const auto p = CurrentProfile::uniform(c, 0.1, meta);
    const auto path = scratch("sine.csv");
    saveProfile(p, path);
    const auto q = loadProfile(path);
    CHECK(q == p);
    CHECK(q.meta().name == "sine");
    CHECK((q.meta().source == Source::Ai));
    CHECK(q.meta().dt_nominal == 0.1);
    CHECK(q.meta().initial_soc == 0.3);
    CHECK(q.duration() == p.duration());
  }

  TEST_CASE("sampling is right-continuous and piecewise constant") {
    const auto p = driveCycle({}, 7);
    for (std::size_t i = 1; i < p.size(); i += 37) {
      const double t = p.times()[i];
      CHECK(p.sample(t) == p.currents()[i]);
      CHECK(p.sample(t - 1e-9) == p.currents()[i - 1]);
      CHECK(p.sample(t + 0.5) == p.currents()[i]);
    }
  }

  TEST_CASE("concatenation is associative and duration additive") {
    const auto a = constantCurrent(1.0, 5.0, Direction::Discharge, 10.0);
    const auto b = CurrentProfile::uniform({1.0, 0.0, -1.0}, 0.5, {});
    const auto c = constantCurrent(0.5, 5.0, Direction::Charge, 7.0);
    const auto left = concat(concat(a, b), c);
    const auto right = concat(a, concat(b, c));
    CHECK(left == right);
    CHECK(left.duration() == Approx(a.duration() + b.duration() + c.duration()));
  }

  TEST_CASE("drive cycle is seeded and bounded") {
    const DriveCycleSpec spec;
    const auto a = driveCycle(spec, 3), b = driveCycle(spec, 3), c = driveCycle(spec, 4);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK(a.duration() == spec.duration);
    for (double i : a.currents()) {
      CHECK(i <= spec.max_charge_a);
      CHECK(i >= -spec.max_discharge_a);
    }
    const auto sim = simulate(a, ecm::refcell(), ecm::CellState::atRest(spec.initial_soc, 25.0, 3));
    CHECK(sim.saturated_steps == 0);
    CHECK(sim.soc.minCoeff() > 0.0);
  }

  TEST_CASE("traditional suite outlasts the AI target by a factor of five") {
    const TraditionalRecipe recipe;
    const auto suite = traditionalSuite(recipe);
    const double total = totalDuration(suite);
    // AI target: one default-length episode at dt = 1 s.
    CHECK(total >= 5.0 * 20000.0);
    for (const auto& p : suite) {
      CHECK((p.meta().source == Source::Traditional));
      const auto init = ecm::CellState::atRest(p.meta().initial_soc, 25.0, 3);
      const auto limited = enforceLimits(p, ecm::refcell(), init, ecm::kRefVoltageMin, ecm::kRefVoltageMax);
      CHECK(limited.clamped_samples < p.size() / 10);
      CHECK(limited.profile.times() == p.times());
      const auto sim = simulate(limited.profile, ecm::refcell(), init);
      CHECK(sim.voltage.minCoeff() >= ecm::kRefVoltageMin);
      CHECK(sim.voltage.maxCoeff() <= ecm::kRefVoltageMax);
      CHECK(sim.saturated_steps == 0);
    }
  }

  TEST_CASE("voltage guard rests instead of crossing a limit") {
    const auto p = constantCurrent(2.0, 5.0, Direction::Charge, 600.0);
    const auto init = ecm::CellState::atRest(0.9, 25.0, 3);
    const auto limited = enforceLimits(p, ecm::refcell(), init, 2.7, 4.25);
    CHECK(limited.clamped_samples > 0);
    CHECK(limited.profile.currents().front() == 10.0);
    const auto sim = simulate(limited.profile, ecm::refcell(), init);
    CHECK(sim.voltage.maxCoeff() <= 4.25);
    for (double c : limited.profile.currents()) CHECK((c == 0.0 || c == 10.0));
  }

  TEST_CASE("simulate replays uniform profiles step by step") {
    const auto params = ecm::refcell();
    const auto p = driveCycle({.duration = 300.0}, 1);
    auto s = ecm::CellState::atRest(0.9, 25.0, 3);
    const auto sim = simulate(p, params, s);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto r = ecm::step(s, p.currents()[i], 1.0, params);
      s = r.state;
      CHECK(sim.voltage[static_cast<Eigen::Index>(i)] == r.voltage);
    }
  }
}
