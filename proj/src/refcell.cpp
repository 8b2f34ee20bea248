#include "doeforge/refcell.hpp"

#include <cmath>

namespace doeforge::ecm {

namespace {

Eigen::VectorXd linspace(double lo, double hi, int n) { return Eigen::VectorXd::LinSpaced(n, lo, hi); }

double arrhenius(double temp_c) { return std::exp(3000.0 * (1.0 / (temp_c + 273.15) - 1.0 / 298.15)); }

double r0Base(double soc) { return 0.010 + 0.010 * std::exp(-6.0 * soc) + 0.003 * soc * soc; }

// Effective resistance drops with current magnitude; charge sees 8 % more.
double r0CurrentFactor(double current) {
  const double x = std::abs(current) / 5.0;
  const double bv = x > 0.0 ? 0.7 + 0.3 * std::asinh(x) / x : 1.0;
  return current > 0.0 ? 1.08 * bv : bv;
}

template <typename F>
LookupTable2D tabulate2(const Eigen::VectorXd& soc, const Eigen::VectorXd& temp, F f) {
  Eigen::VectorXd v(soc.size() * temp.size());
  for (Eigen::Index i = 0; i < soc.size(); ++i)
    for (Eigen::Index j = 0; j < temp.size(); ++j) v[i * temp.size() + j] = f(soc[i], temp[j]);
  return LookupTable2D({soc, temp}, v);
}

LookupTable3D tabulateR0(const Eigen::VectorXd& soc, const Eigen::VectorXd& temp, const Eigen::VectorXd& current) {
  Eigen::VectorXd v(soc.size() * temp.size() * current.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < soc.size(); ++i)
    for (Eigen::Index j = 0; j < temp.size(); ++j)
      for (Eigen::Index c = 0; c < current.size(); ++c)
        v[k++] = r0Base(soc[i]) * arrhenius(temp[j]) * r0CurrentFactor(current[c]);
  return LookupTable3D({soc, temp, current}, v);
}

LookupTable2D ocvTable(const Eigen::VectorXd& soc, const Eigen::VectorXd& temp) {
  // Entropic coefficient of +0.2 mV/K.
  return tabulate2(soc, temp, [](double s, double t) { return refOcv(s) + 2e-4 * (t - 25.0); });
}

}  // namespace

double refOcv(double soc) {
  const double knee = (1.0 - std::exp(-10.0 * soc)) / (1.0 - std::exp(-10.0));
  return 3.0 + 1.2 * (0.4 * knee + 0.6 * std::pow(soc, 1.2));
}

EcmParams refcell() {
  const Eigen::VectorXd soc = linspace(0.0, 1.0, 21);
  Eigen::VectorXd temp(3);
  temp << 10.0, 25.0, 40.0;
  Eigen::VectorXd current(13);
  current << -30, -20, -10, -5, -2, -0.5, 0, 0.5, 2, 5, 10, 20, 30;

  EcmParams p;
  p.name = "refcell";
  p.ocv = ocvTable(soc, temp);
  p.r0 = tabulateR0(soc, temp, current);

  const double tau[3] = {10.0, 100.0, 1000.0};
  const double r_nom[3] = {0.004, 0.006, 0.008};
  for (int i = 0; i < 3; ++i) {
    auto r = [&, i](double s, double t) { return r_nom[i] * (1.0 + std::exp(-8.0 * s)) * arrhenius(t); };
    auto c = [&, i](double s, double) {
      const double r25 = r_nom[i] * (1.0 + std::exp(-8.0 * s));
      return tau[i] * (0.9 + 0.2 * s) / r25;
    };
    p.rc.push_back({tabulate2(soc, temp, r), tabulate2(soc, temp, c)});
  }

  Eigen::VectorXd cap(3);
  cap << 4.85, kRefCapacityAh, 5.05;
  p.capacity_ah = LookupTable1D({temp}, cap);
  p.validate();
  return p;
}

EcmParams refcell2Rc() {
  const Eigen::VectorXd soc = linspace(0.0, 1.0, 11);
  Eigen::VectorXd temp(1);
  temp << kRefTempC;
  Eigen::VectorXd current(4);
  current << -kRefDischargeLimitA, -0.2 * kRefCapacityAh, 0.2 * kRefCapacityAh, kRefChargeLimitA;

  EcmParams p;
  p.name = "refcell-2rc";
  p.ocv = ocvTable(linspace(0.0, 1.0, 21), temp);
  p.r0 = tabulateR0(soc, temp, current);

  auto r1 = [](double s, double) { return 0.005 * (1.0 + std::exp(-8.0 * s)); };
  auto c1 = [&](double s, double t) { return 20.0 * (0.9 + 0.2 * s) / r1(s, t); };
  auto r2 = [](double s, double) { return 0.007 * (1.0 + 0.5 * std::exp(-8.0 * s)); };
  auto c2 = [&](double s, double t) { return 400.0 * (0.9 + 0.2 * s) / r2(s, t); };
  p.rc.push_back({tabulate2(soc, temp, r1), tabulate2(soc, temp, c1)});
  p.rc.push_back({tabulate2(soc, temp, r2), tabulate2(soc, temp, c2)});

  Eigen::VectorXd cap(1);
  cap << kRefCapacityAh;
  p.capacity_ah = LookupTable1D({temp}, cap);
  p.validate();
  return p;
}

}  // namespace doeforge::ecm
