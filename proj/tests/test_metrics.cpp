#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doeforge/errors.hpp"
#include "doeforge/metrics.hpp"

using namespace doeforge;
using namespace doeforge::metrics;
using doctest::Approx;

namespace {

std::vector<double> sine(int n, double cycles_per_window, int window, double amp = 1.0, double offset = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = offset + amp * std::sin(2.0 * std::numbers::pi * cycles_per_window * i / window);
  return x;
}

// Direct O(W^2) DFT oracle for the one-sided band split.
Eigen::Vector3d naiveBands(const std::vector<double>& x, const BandSpec& spec) {
  const int w = spec.window;
  double mean = 0.0;
  for (int n = 0; n < w; ++n) mean += x[x.size() - w + n];
  mean /= w;
  std::vector<double> y(static_cast<std::size_t>(w));
  for (int n = 0; n < w; ++n)
    y[static_cast<std::size_t>(n)] = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / w)) * (x[x.size() - w + n] - mean);
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  for (int k = 1; k <= w / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int n = 0; n < w; ++n) {
      re += y[static_cast<std::size_t>(n)] * std::cos(2.0 * std::numbers::pi * k * n / w);
      im -= y[static_cast<std::size_t>(n)] * std::sin(2.0 * std::numbers::pi * k * n / w);
    }
    const double p = (re * re + im * im) / w;
    e[spec.bandOfBin(k)] += k == w / 2 ? p : 2.0 * p;
  }
  return e;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("histogram bin updates and clamping") {
    Histogram h(0.0, 10.0);
    h.add(3.5);
    Counts e3 = Counts::Zero(10);
    e3[3] = 1;
    CHECK(h.counts() == e3);
    h.add(-5.0);
    CHECK(h.counts()[0] == 1);
    h.add(99.0);
    CHECK(h.counts()[9] == 1);
    CHECK(h.total() == 3);
    CHECK(h.counts().sum() == h.total());
  }

  TEST_CASE("uniform stream fills bins within 5 sigma") {
    Histogram h(0.0, 1.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) h.add(u(rng));
    const double sigma = std::sqrt(n * 0.1 * 0.9);
    for (int b = 0; b < 10; ++b) CHECK(std::abs(h.counts()[b] - n / 10.0) < 5.0 * sigma);
  }

  TEST_CASE("histogram updates commute") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.5, 0.3);
    std::vector<double> xs(1000);
    for (auto& x : xs) x = g(rng);
    Histogram a(0.0, 1.0), b(0.0, 1.0);
    for (double x : xs) a.add(x);
    std::shuffle(xs.begin(), xs.end(), rng);
    for (double x : xs) b.add(x);
    CHECK(a == b);
  }

  TEST_CASE("uniformity closed forms and invariances") {
    CHECK(uniformity(Counts::Constant(10, 7)) == Approx(1.0));
    Counts one = Counts::Zero(10);
    one[4] = 12;
    CHECK(uniformity(one) == 0.0);
    Counts two = Counts::Zero(10);
    two[0] = 1;
    two[1] = 1;
    CHECK(uniformity(two) == Approx(std::log(2.0) / std::log(10.0)).epsilon(1e-12));
    CHECK(uniformity(Counts::Zero(10)) == 0.0);

    Counts c(10);
    c << 5, 0, 3, 9, 1, 1, 0, 2, 7, 4;
    Counts perm = c.reverse();
    CHECK(uniformity(perm) == Approx(uniformity(c)).epsilon(1e-14));
    Counts scaled = c * 13;
    CHECK(uniformity(scaled) == Approx(uniformity(c)).epsilon(1e-14));
  }

  TEST_CASE("band energies: DC, pure mid tone, low plus high") {
    const BandSpec spec;
    CHECK_FALSE(bandEnergies(std::vector<double>(100, 1.0), spec).has_value());

    const auto dc = bandEnergies(std::vector<double>(256, 3.0), spec);
    REQUIRE(dc.has_value());
    CHECK(dc->total() == Approx(0.0));

    // bin 5 -> 5/256 Hz at dt = 1, in the mid band
    const auto mid = bandEnergies(sine(256, 5, 256, 1.0, 2.0), spec);
    CHECK(spec.bandOfBin(5) == 1);
    CHECK(mid->mid > 100.0 * (mid->low + mid->high));

    // At W = 256 the low band holds only bin 1, whose Hann sidelobes fall in
    // DC and the mid band, so the equal-split check uses a longer window.
    BandSpec wide = spec;
    wide.window = 1024;
    auto mix = sine(1024, 3, 1024);
    const auto hi = sine(1024, 160, 1024);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += hi[i];
    CHECK(wide.bandOfBin(4) == 0);
    CHECK(wide.bandOfBin(159) == 2);
    const auto e = bandEnergies(mix, wide);
    CHECK(e->low == Approx(e->high).epsilon(0.01));
    CHECK(e->mid < 1e-6 * e->low);
  }

  TEST_CASE("band energies satisfy Parseval and match a direct DFT") {
    BandSpec spec;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> x(300);
    for (auto& v : x) v = g(rng);
    const auto e = bandEnergies(x, spec);
    double mean = 0.0;
    for (int n = 0; n < 256; ++n) mean += x[44 + n];
    mean /= 256;
    std::vector<double> y(256);
    double y_mean = 0.0;
    for (int n = 0; n < 256; ++n) {
      y[n] = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / 256)) * (x[44 + n] - mean);
      y_mean += y[n] / 256;
    }
    double ac = 0.0;
    for (double v : y) ac += (v - y_mean) * (v - y_mean);
    CHECK(e->total() == Approx(ac).epsilon(1e-6));
    const auto naive = naiveBands(x, spec);
    for (int b = 0; b < 3; ++b) CHECK(e->asVector()[b] == Approx(naive[b]).epsilon(1e-9));
  }

  TEST_CASE("band coverage windows and merge") {
    const BandSpec spec;
    BandCoverage cov(spec);
    const auto x = sine(256 + 64 * 3, 40, 256);
    int evaluated = 0;
    for (double v : x) evaluated += cov.push(v) ? 1 : 0;
    CHECK(evaluated == 4);
    CHECK(cov.windows() == 4);
    CHECK(cov.visits()[2] == 4);
    CHECK(cov.visits()[0] == 0);
    CHECK(cov.visitFractions()[2] == 1.0);
    CHECK(cov.score() == 0.0);

    BandCoverage other(spec);
    for (double v : sine(256, 1, 256)) other.push(v);
    cov.merge(other);
    CHECK(cov.windows() == 5);
    CHECK(cov.visits()[0] == 1);
    CHECK(cov.score() > 0.0);
  }

  TEST_CASE("error statistics examples") {
    const int n = 100;
    Eigen::VectorXd ref = Eigen::VectorXd::LinSpaced(n, 3.2, 4.1);
    Eigen::VectorXd soc = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
    Eigen::VectorXd cur = Eigen::VectorXd::LinSpaced(n, -30.0, 20.0);

    const auto same = errorStats(ref, ref, soc, cur);
    CHECK(same.mae == 0.0);
    CHECK(same.error.counts()[20] == n);

    const auto offset = errorStats((ref.array() + 1e-3).matrix(), ref, soc, cur);
    CHECK(offset.mae == Approx(1e-3).epsilon(1e-9));

    Eigen::VectorXd alt = ref;
    for (int i = 0; i < n; ++i) alt[i] += (i % 2 == 0 ? 2e-3 : -2e-3);
    const auto a = errorStats(alt, ref, soc, cur);
    CHECK(a.mae == Approx(2e-3).epsilon(1e-9));
    CHECK(a.error.total() == n);
    CHECK(a.error_vs_soc.total() == n);
    CHECK(a.error_vs_current.total() == n);

    CHECK_THROWS_AS(errorStats(ref, ref.head(5), soc, cur), ValidationError);
    CHECK_THROWS_AS(errorStats(Eigen::VectorXd(), Eigen::VectorXd(), Eigen::VectorXd(), Eigen::VectorXd()),
                    ValidationError);
  }

  TEST_CASE("error statistics agree with a brute-force recomputation") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.004);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 5000;
    Eigen::VectorXd ref(n), model(n), soc(n), cur(n);
    for (int i = 0; i < n; ++i) {
      ref[i] = 3.0 + u(rng);
      model[i] = ref[i] + g(rng);
      soc[i] = u(rng);
      cur[i] = -30.0 + 50.0 * u(rng);
    }
    const auto s = errorStats(model, ref, soc, cur);
    double sum = 0.0, mx = 0.0;
    for (int i = 0; i < n; ++i) {
      sum += std::abs(model[i] - ref[i]);
      mx = std::max(mx, std::abs(model[i] - ref[i]));
    }
    CHECK(s.mae == Approx(sum / n).epsilon(1e-12));
    CHECK(s.max_abs == mx);
    for (int b = 0; b < 10; ++b) {
      double acc = 0.0;
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (std::min(9, static_cast<int>(soc[i] * 10)) == b) {
          acc += std::abs(model[i] - ref[i]);
          ++cnt;
        }
      CHECK(s.mae_by_soc[b] == Approx(acc / cnt).epsilon(1e-9));
    }
  }

  TEST_CASE("time coverage merge is associative") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TimeCoverage a, b, c;
    for (int i = 0; i < 300; ++i) {
      a.add(2.7 + 1.6 * u(rng), -30.0 + 50.0 * u(rng), u(rng));
      b.add(3.5, 0.0, u(rng));
      c.add(4.0 + 0.3 * u(rng), 5.0, 0.9);
    }
    TimeCoverage ab = a, bc = b;
    ab.merge(b);
    ab.merge(c);
    bc.merge(c);
    TimeCoverage a_bc = a;
    a_bc.merge(bc);
    CHECK(ab.voltage() == a_bc.voltage());
    CHECK(ab.current() == a_bc.current());
    CHECK(ab.soc() == a_bc.soc());
  }

  TEST_CASE("JSON and CSV exports") {
    Histogram h(0.0, 1.0);
    h.add(0.05);
    h.add(0.95);
    const auto j = toJson(h);
    CHECK(j["total"] == 2);
    CHECK(j["counts"][0] == 1);
    const auto csv = histogramCsv(h);
    CHECK(csv.rfind("bin,lo,hi,count\n0,0,0.1,1\n", 0) == 0);
  }
}
