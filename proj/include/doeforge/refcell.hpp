#pragma once

#include "doeforge/ecm.hpp"

namespace doeforge::ecm {

// Ratings of the synthetic reference cell. The current limits are desk-scale
// stand-ins for a cell datasheet; pack scaling is left to configuration.
inline constexpr double kRefCapacityAh = 5.0;
inline constexpr double kRefChargeLimitA = 20.0;
inline constexpr double kRefDischargeLimitA = 30.0;
inline constexpr double kRefVoltageMin = 2.7;
inline constexpr double kRefVoltageMax = 4.3;
inline constexpr double kRefTempC = 25.0;

/// OCV of the reference cell at 25 degC: monotone, 3.0 V at empty, 4.2 V at full.
double refOcv(double soc);

/// Synthetic 3-RC reference cell used as the simulated plant. Time constants
/// are roughly 10 s, 100 s and 1000 s; R0 lies between about 10 and 35 mOhm
/// and falls with current magnitude (Butler-Volmer-like), slightly higher on
/// charge than discharge.
EcmParams refcell();

/// 2-RC cell sharing the reference OCV and capacity, tabulated on the default
/// identification grid (11 SoC points, r0 current points {-30, -1, 1, 20} A, a
/// single 25 degC temperature). Used as an exactly representable ground truth.
EcmParams refcell2Rc();

}  // namespace doeforge::ecm
