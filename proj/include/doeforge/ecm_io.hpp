#pragma once

#include <filesystem>

#include <json.hpp>

#include "doeforge/ecm.hpp"

namespace doeforge::ecm {

inline constexpr int kParamsFormatVersion = 1;

/// Table JSON: {"axes": [[...], ...], "values": nested arrays, first axis outermost}.
template <int Dim>
nlohmann::json tableToJson(const LookupTable<double, Dim>& table);

template <int Dim>
LookupTable<double, Dim> tableFromJson(const nlohmann::json& j, const std::string& what);

nlohmann::json toJson(const EcmParams& params);

/// Parses and validates; errors name the offending table.
EcmParams paramsFromJson(const nlohmann::json& j);

EcmParams loadParams(const std::filesystem::path& path);
void saveParams(const EcmParams& params, const std::filesystem::path& path);

/// Resolves "builtin:refcell" or a JSON file path.
EcmParams resolveCell(const std::string& spec);

}  // namespace doeforge::ecm
