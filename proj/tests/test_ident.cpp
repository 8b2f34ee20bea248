#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "doeforge/errors.hpp"
#include "doeforge/ident.hpp"
#include "doeforge/lm.hpp"
#include "doeforge/refcell.hpp"
#include "support/excitation.hpp"

using namespace doeforge;
using namespace doeforge::ident;
using doctest::Approx;

namespace {

Dataset measure(const ecm::EcmParams& cell, const profiles::CurrentProfile& profile, double noise_v = 0.0,
                std::uint64_t seed = 1) {
  Dataset d;
  d.profile = profile;
  d.initial_soc = profile.meta().initial_soc;
  d.voltage = replay(cell, d).voltage;
  if (noise_v > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, noise_v);
    for (Eigen::Index i = 0; i < d.voltage.size(); ++i) d.voltage[i] += n(rng);
  }
  return d;
}

profiles::CurrentProfile shortPulses(double initial_soc = 0.9) {
  std::vector<double> i;
  for (int k = 0; k < 6; ++k) {
    for (int s = 0; s < 20; ++s) i.push_back(k % 2 ? 10.0 : -20.0);
    for (int s = 0; s < 60; ++s) i.push_back(0.0);
  }
  profiles::ProfileMeta meta;
  meta.initial_soc = initial_soc;
  return profiles::CurrentProfile::uniform(i, 1.0, meta);
}

double relErr(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_SUITE("ident") {
  TEST_CASE("lm solves Rosenbrock") {
    auto f = [](const Eigen::VectorXd& x) {
      Eigen::VectorXd r(2);
      r << 1.0 - x[0], 10.0 * (x[1] - x[0] * x[0]);
      return r;
    };
    auto jac = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
      Eigen::MatrixXd J(2, 2);
      J << -1.0, 0.0, -20.0 * x[0], 10.0;
      return J;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    lm::Options opt;
    opt.tol_g = 1e-14;
    opt.tol_x = 1e-14;
    opt.tol_f = 0.0;
    opt.max_iterations = 500;
    const auto res = lm::solve<double>(f, jac, x0, opt);
    CHECK(std::abs(res.x[0] - 1.0) < 1e-8);
    CHECK(std::abs(res.x[1] - 1.0) < 1e-8);
    for (std::size_t k = 1; k < res.report.cost_history.size(); ++k) {
      CHECK(res.report.cost_history[k] <= res.report.cost_history[k - 1]);
    }
  }

  TEST_CASE("lm reaches the normal-equation solution of a linear problem within 3 iterations") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd A(30, 5);
    Eigen::VectorXd b(30);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = n(rng);
    const Eigen::VectorXd oracle = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x - b; };
    auto jac = [&](const Eigen::VectorXd&, const Eigen::VectorXd&) -> Eigen::MatrixXd { return A; };
    const auto res = lm::solve<double>(f, jac, Eigen::VectorXd::Zero(5), {});
    CHECK(res.report.iterations <= 3);
    CHECK((res.x - oracle).norm() < 1e-8 * oracle.norm());
  }

  TEST_CASE("lm returns immediately from an optimal start") {
    auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x - Eigen::VectorXd::Ones(3); };
    auto jac = [](const Eigen::VectorXd&, const Eigen::VectorXd&) -> Eigen::MatrixXd {
      return Eigen::MatrixXd::Identity(3, 3);
    };
    const auto res = lm::solve<double>(f, jac, Eigen::VectorXd::Ones(3), {});
    CHECK(res.report.accepted == 0);
    CHECK(res.report.stop_reason == "gradient");
    CHECK(res.x == Eigen::VectorXd::Ones(3));
  }

  TEST_CASE("lm rejects a non-finite start") {
    auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; };
    auto jac = [](const Eigen::VectorXd&, const Eigen::VectorXd&) -> Eigen::MatrixXd {
      return Eigen::MatrixXd::Identity(1, 1);
    };
    CHECK_THROWS_AS(lm::solve<double>(f, jac, Eigen::VectorXd::Constant(1, std::nan("")), {}), ValidationError);
  }

  TEST_CASE("forward jacobian of a linear residual is its matrix") {
    Eigen::MatrixXd A(4, 3);
    A << 1, 2, 3, -4, 5, 0.5, 0, 0, 7, 1e3, -2, 1;
    Eigen::VectorXd b(4);
    b << 1, -1, 2, 0.5;
    auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x + b; };
    Eigen::VectorXd x(3);
    x << 0.3, -200.0, 5.0;
    const Eigen::MatrixXd J = lm::forwardJacobian<double>(f, x, f(x));
    CHECK((J - A).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, A.cwiseAbs().maxCoeff()));
  }

  TEST_CASE("forward jacobian names a parameter with a non-finite column") {
    auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      Eigen::VectorXd r(1);
      r[0] = x[1] > 0.0 ? std::log(-1.0) : 0.0;
      return r;
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
    try {
      lm::forwardJacobian<double>(f, x, f(x));
      FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("parameter 1") != std::string::npos);
    }
  }

  TEST_CASE("spec validation") {
    IdentSpec s;
    CHECK(s.numParams() == 88);
    s.soc_breakpoints = {0.5};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = IdentSpec{};
    s.current_breakpoints = {1.0, -1.0};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    const IdentSpec back = identSpecFromJson(toJson(IdentSpec{}));
    CHECK(back.soc_breakpoints == IdentSpec{}.soc_breakpoints);
    CHECK(back.solver.max_iterations == IdentSpec{}.solver.max_iterations);
  }

  TEST_CASE("log encoding round-trips and decodes positive") {
    const auto truth = ecm::refcell2Rc();
    const IdentSpec spec;
    const auto known = KnownCell::from(truth);
    const Eigen::VectorXd x = encode(truth, spec);
    const auto p = decode(x, spec, known);
    CHECK((encode(p, spec) - x).cwiseAbs().maxCoeff() < 1e-12);
    for (double s : spec.soc_breakpoints) {
      for (double c : spec.current_breakpoints) {
        CHECK(p.r0({s, 25.0, c}) == Approx(truth.r0({s, 25.0, c})).epsilon(1e-14));
      }
      for (int b = 0; b < 2; ++b) {
        CHECK(p.rc[b].resistance({s, 25.0}) == Approx(truth.rc[b].resistance({s, 25.0})).epsilon(1e-14));
        CHECK(p.rc[b].capacitance({s, 25.0}) == Approx(truth.rc[b].capacitance({s, 25.0})).epsilon(1e-14));
      }
    }
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 30.0);
    Eigen::VectorXd wild(spec.numParams());
    for (Eigen::Index i = 0; i < wild.size(); ++i) wild[i] = n(rng);
    const auto q = decode(wild, spec, known);
    CHECK(q.r0.values().minCoeff() > 0.0);
    for (const auto& rc : q.rc) {
      CHECK(rc.resistance.values().minCoeff() > 0.0);
      CHECK(rc.capacitance.values().minCoeff() > 0.0);
    }
  }

  TEST_CASE("residuals vanish on self-generated data and shift with an offset") {
    const auto truth = ecm::refcell2Rc();
    const IdentSpec spec;
    const auto known = KnownCell::from(truth);
    const Eigen::VectorXd x = encode(truth, spec);
    Dataset d = measure(truth, shortPulses());
    const Eigen::VectorXd f = residuals(x, {d}, spec, known);
    CHECK(f.size() == static_cast<Eigen::Index>(d.profile.size()));
    CHECK(f.cwiseAbs().maxCoeff() < 1e-12);
    d.voltage.array() += 1e-3;
    const Eigen::VectorXd g = residuals(x, {d}, spec, known);
    CHECK((g.array() + 1e-3).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("residuals reject a length mismatch") {
    const auto truth = ecm::refcell2Rc();
    Dataset d = measure(truth, shortPulses());
    d.voltage.conservativeResize(d.voltage.size() - 1);
    CHECK_THROWS_AS(residuals(encode(truth, {}), {d}, {}, KnownCell::from(truth)), ValidationError);
  }

  TEST_CASE("jacobian columns of breakpoints the data never reaches are zero") {
    const auto truth = ecm::refcell2Rc();
    const IdentSpec spec;
    const auto known = KnownCell::from(truth);
    const Dataset d = measure(truth, shortPulses(0.95));
    const Eigen::MatrixXd J = jacobian(encode(truth, spec), {d}, spec, known);
    CHECK(J.rows() == static_cast<Eigen::Index>(d.profile.size()));
    CHECK(J.cols() == spec.numParams());
    const int ns = spec.numSoc(), nc = spec.numCurrent();
    // The data stays above SoC 0.8, so breakpoints 0.0 ... 0.7 are untouched.
    for (int s = 0; s <= 7; ++s) {
      for (int c = 0; c < nc; ++c) CHECK(J.col(s * nc + c).cwiseAbs().maxCoeff() == 0.0);
      for (int t = 0; t < 4; ++t) CHECK(J.col(ns * nc + t * ns + s).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(J.col(9 * nc + 0).cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("jacobian at the truth has full column rank on a staircase excitation") {
    const auto truth = ecm::refcell2Rc();
    const IdentSpec spec;
    const auto known = KnownCell::from(truth);
    const Dataset d = measure(truth, testing::staircaseExcitation(5.0));
    const Eigen::MatrixXd J = jacobian(encode(truth, spec), {d}, spec, known);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    qr.setThreshold(1e-10);
    CHECK(qr.rank() == spec.numParams());
  }

  TEST_CASE("resting data leaves every r0 breakpoint unexercised") {
    const auto truth = ecm::refcell2Rc();
    const auto known = KnownCell::from(truth);
    profiles::ProfileMeta meta;
    meta.initial_soc = 0.5;
    const Dataset d = measure(truth, profiles::CurrentProfile::uniform(std::vector<double>(300, 0.0), 1.0, meta));
    const auto r = identify({d}, IdentSpec{}, known);
    CHECK(r.support.r0.maxCoeff() == 0);
    CHECK(r.support.soc[5] == 300);
    CHECK(r.report.stop_reason == "gradient");
    CHECK(r.residual_norm < 1e-12);
  }

  TEST_CASE("unsupported breakpoints copy their nearest supported neighbour") {
    const IdentSpec spec;
    const int ns = spec.numSoc(), nc = spec.numCurrent();
    Support sup{Eigen::MatrixXi::Zero(ns, nc), Eigen::VectorXi::Zero(ns)};
    sup.r0.row(3).setConstant(100);
    sup.r0(6, 2) = 100;
    sup.soc[3] = 100;
    sup.soc[4] = 100;
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(spec.numParams(), 0.0, spec.numParams() - 1.0);
    const Eigen::VectorXd before = x;
    const int changed = fillUnsupported(x, sup, spec);
    CHECK(changed == (ns * nc - nc - 1) + 4 * (ns - 2));
    CHECK(x[0 * nc + 1] == before[3 * nc + 1]);
    CHECK(x[10 * nc + 1] == before[3 * nc + 1]);
    CHECK(x[6 * nc + 2] == before[6 * nc + 2]);
    CHECK(x[5 * nc + 2] == before[6 * nc + 2]);  // distance 1 beats distance 2
    CHECK(x[4 * nc + 2] == before[3 * nc + 2]);  // ties go to the lower SoC
    for (int b = 0; b < 4; ++b) {
      CHECK(x[ns * nc + b * ns + 0] == before[ns * nc + b * ns + 3]);
      CHECK(x[ns * nc + b * ns + 10] == before[ns * nc + b * ns + 4]);
      CHECK(x[ns * nc + b * ns + 4] == before[ns * nc + b * ns + 4]);
    }

    Support none{Eigen::MatrixXi::Zero(ns, nc), Eigen::VectorXi::Zero(ns)};
    Eigen::VectorXd y = before;
    CHECK(fillUnsupported(y, none, spec) == 0);
    CHECK(y == before);

    // r0 is never copied across currents
    Support one{Eigen::MatrixXi::Zero(ns, nc), Eigen::VectorXi::Zero(ns)};
    one.r0(3, 0) = 100;
    Eigen::VectorXd z = before;
    CHECK(fillUnsupported(z, one, spec) == ns - 1);
    for (int s = 0; s < ns; ++s) {
      CHECK(z[s * nc + 0] == before[3 * nc + 0]);
      for (int c = 1; c < nc; ++c) CHECK(z[s * nc + c] == before[s * nc + c]);
    }
  }

  TEST_CASE("empty data is rejected") {
    const auto known = KnownCell::from(ecm::refcell2Rc());
    CHECK_THROWS_AS(identify({}, IdentSpec{}, known), ValidationError);
  }

  TEST_CASE("identification recovers a 2-RC ground truth on supported breakpoints") {
    const auto truth = ecm::refcell2Rc();
    const IdentSpec spec;
    const auto known = KnownCell::from(truth);
    const Dataset d = measure(truth, testing::staircaseExcitation(5.0));
    const auto r = identify({d}, spec, known);
    int checked = 0;
    for (int s = 0; s < spec.numSoc(); ++s) {
      const double soc = spec.soc_breakpoints[s];
      for (int c = 0; c < spec.numCurrent(); ++c) {
        if (r.support.r0(s, c) < spec.min_support) continue;
        const double cur = spec.current_breakpoints[c];
        CHECK(relErr(r.params.r0({soc, 25.0, cur}), truth.r0({soc, 25.0, cur})) < 0.02);
        ++checked;
      }
      if (r.support.soc[s] < spec.min_support) continue;
      for (int b = 0; b < 2; ++b) {
        const double tau = r.params.rc[b].resistance({soc, 25.0}) * r.params.rc[b].capacitance({soc, 25.0});
        const double tau_true = truth.rc[b].resistance({soc, 25.0}) * truth.rc[b].capacitance({soc, 25.0});
        CHECK(relErr(tau, tau_true) < 0.10);
      }
    }
    CHECK(checked == spec.numSoc() * spec.numCurrent());
    CHECK(r.fit.mae < 1e-5);

    // The reported cost matches an independent recomputation.
    const Eigen::VectorXd f = residuals(encode(r.params, spec), {d}, spec, known);
    CHECK(f.squaredNorm() == Approx(r.report.final_cost).epsilon(1e-10));
    CHECK(r.residual_norm * r.residual_norm == Approx(r.report.final_cost).epsilon(1e-10));
    for (std::size_t k = 1; k < r.report.cost_history.size(); ++k) {
      CHECK(r.report.cost_history[k] <= r.report.cost_history[k - 1]);
    }

    SUBCASE("re-identifying from the fitted model is a fixed point") {
      const Dataset again = measure(r.params, d.profile);
      const auto r2 = identify({again}, spec, known);
      for (int s = 0; s < spec.numSoc(); ++s) {
        const double soc = spec.soc_breakpoints[s];
        for (int c = 0; c < spec.numCurrent(); ++c) {
          const double cur = spec.current_breakpoints[c];
          CHECK(relErr(r2.params.r0({soc, 25.0, cur}), r.params.r0({soc, 25.0, cur})) < 1e-3);
        }
        for (int b = 0; b < 2; ++b) {
          CHECK(relErr(r2.params.rc[b].resistance({soc, 25.0}), r.params.rc[b].resistance({soc, 25.0})) < 1e-3);
          CHECK(relErr(r2.params.rc[b].capacitance({soc, 25.0}), r.params.rc[b].capacitance({soc, 25.0})) < 1e-3);
        }
      }
    }
  }

  TEST_CASE("evaluate: perfect model and an OCV bias on rest") {
    const auto truth = ecm::refcell2Rc();
    const Dataset d = measure(truth, shortPulses());
    CHECK(evaluate(truth, d).mae < 1e-12);

    profiles::ProfileMeta meta;
    meta.initial_soc = 0.4;
    const Dataset rest = measure(truth, profiles::CurrentProfile::uniform(std::vector<double>(500, 0.0), 1.0, meta));
    ecm::EcmParams biased = truth;
    Eigen::VectorXd v = biased.ocv.values().array() + 1e-3;
    biased.ocv = LookupTable2D({truth.ocv.axis(0), truth.ocv.axis(1)}, v);
    const auto stats = evaluate(biased, rest);
    CHECK(stats.mae == Approx(1e-3).epsilon(1e-9));
    CHECK(stats.count == 500);
  }

  TEST_CASE("measurement CSV round trip") {
    const auto truth = ecm::refcell2Rc();
    const auto known = KnownCell::from(truth);
    const Dataset d = measure(truth, shortPulses(0.7), 1e-3, 9);
    const auto soc = replay(truth, d).soc;
    const auto dir = std::filesystem::temp_directory_path() / "doeforge_ident_test";
    std::filesystem::create_directories(dir);
    saveMeasurement(d, soc, dir / "m.csv");
    const Dataset back = loadMeasurement(dir / "m.csv", known);
    CHECK(back.profile == d.profile);
    CHECK(back.voltage == d.voltage);
    CHECK(back.initial_soc == d.initial_soc);

    std::filesystem::remove(dir / "m.csv.meta.json");
    const Dataset no_meta = loadMeasurement(dir / "m.csv", known);
    CHECK(no_meta.initial_soc == Approx(0.7).epsilon(1e-12));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("result export carries tables and support") {
    const auto truth = ecm::refcell2Rc();
    const auto known = KnownCell::from(truth);
    IdentSpec spec;
    spec.solver.max_iterations = 3;
    const auto r = identify({measure(truth, shortPulses())}, spec, known);
    const auto j = toJson(r);
    CHECK(j["format"] == "doeforge-ident");
    CHECK(j["report"]["iterations"] == r.report.iterations);
    const auto p = paramsFromResultJson(j);
    CHECK(p.r0.values() == r.params.r0.values());
    const std::string csv = resultCsv(r);
    CHECK(csv.rfind("table,soc,current_a,value,support\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 44 + 44);
    CHECK_THROWS_AS(paramsFromResultJson(nlohmann::json{{"format", "other"}}), ValidationError);
  }
}
