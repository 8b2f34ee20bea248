#include "doeforge/ecm_io.hpp"

#include "doeforge/errors.hpp"
#include "doeforge/io.hpp"
#include "doeforge/refcell.hpp"

namespace doeforge::ecm {

using nlohmann::json;

namespace {

json nested(const Eigen::VectorXd& values, const std::vector<Eigen::Index>& dims, std::size_t d, Eigen::Index& cursor) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < dims[d]; ++i) {
    if (d + 1 == dims.size()) {
      arr.push_back(values[cursor++]);
    } else {
      arr.push_back(nested(values, dims, d + 1, cursor));
    }
  }
  return arr;
}

void flatten(const json& j, const std::vector<Eigen::Index>& dims, std::size_t d, std::vector<double>& out,
             const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dims[d]) {
    throw ValidationError(what + ": value grid does not match axis " + std::to_string(d) + " length " +
                          std::to_string(dims[d]));
  }
  for (const auto& item : j) {
    if (d + 1 == dims.size()) {
      if (!item.is_number()) throw ValidationError(what + ": non-numeric grid value");
      out.push_back(item.get<double>());
    } else {
      flatten(item, dims, d + 1, out, what);
    }
  }
}

}  // namespace

template <int Dim>
json tableToJson(const LookupTable<double, Dim>& table) {
  json axes = json::array();
  std::vector<Eigen::Index> dims;
  for (int d = 0; d < Dim; ++d) {
    const auto& a = table.axis(d);
    axes.push_back(std::vector<double>(a.data(), a.data() + a.size()));
    dims.push_back(a.size());
  }
  Eigen::Index cursor = 0;
  return json{{"axes", axes}, {"values", nested(table.values(), dims, 0, cursor)}};
}

template <int Dim>
LookupTable<double, Dim> tableFromJson(const json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("axes") || !j.contains("values")) {
    throw ValidationError(what + ": table needs 'axes' and 'values'");
  }
  const auto& axes_j = j.at("axes");
  if (!axes_j.is_array() || axes_j.size() != static_cast<std::size_t>(Dim)) {
    throw ValidationError(what + ": expected " + std::to_string(Dim) + " axes");
  }
  std::array<typename LookupTable<double, Dim>::Axis, Dim> axes;
  std::vector<Eigen::Index> dims;
  for (int d = 0; d < Dim; ++d) {
    std::vector<double> a;
    try {
      a = axes_j[d].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ValidationError(what + ": axis " + std::to_string(d) + " is not a numeric array");
    }
    axes[d] = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    dims.push_back(static_cast<Eigen::Index>(a.size()));
  }
  std::vector<double> flat;
  flatten(j.at("values"), dims, 0, flat, what);
  try {
    return LookupTable<double, Dim>(axes, Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size())));
  } catch (const ValidationError& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

template json tableToJson<1>(const LookupTable1D&);
template json tableToJson<2>(const LookupTable2D&);
template json tableToJson<3>(const LookupTable3D&);
template LookupTable1D tableFromJson<1>(const json&, const std::string&);
template LookupTable2D tableFromJson<2>(const json&, const std::string&);
template LookupTable3D tableFromJson<3>(const json&, const std::string&);

json toJson(const EcmParams& params) {
  json rc = json::array();
  for (const auto& pair : params.rc) {
    rc.push_back({{"resistance_ohm", tableToJson(pair.resistance)}, {"capacitance_f", tableToJson(pair.capacitance)}});
  }
  return json{{"format", "doeforge-ecm"},
              {"format_version", kParamsFormatVersion},
              {"name", params.name},
              {"ocv_v", tableToJson(params.ocv)},
              {"r0_ohm", tableToJson(params.r0)},
              {"rc_pairs", rc},
              {"capacity_ah", tableToJson(params.capacity_ah)}};
}

EcmParams paramsFromJson(const json& j) {
  if (!j.is_object()) throw ValidationError("cell parameters: expected a JSON object");
  if (j.value("format_version", 0) != kParamsFormatVersion) {
    throw ValidationError("cell parameters: unsupported format_version (expected " +
                          std::to_string(kParamsFormatVersion) + ")");
  }
  for (const char* key : {"ocv_v", "r0_ohm", "rc_pairs", "capacity_ah"}) {
    if (!j.contains(key)) throw ValidationError(std::string("cell parameters: missing '") + key + "'");
  }
  EcmParams p;
  p.name = j.value("name", std::string("unnamed"));
  p.ocv = tableFromJson<2>(j.at("ocv_v"), "ocv_v");
  p.r0 = tableFromJson<3>(j.at("r0_ohm"), "r0_ohm");
  const auto& rc = j.at("rc_pairs");
  if (!rc.is_array()) throw ValidationError("cell parameters: rc_pairs must be an array");
  for (std::size_t i = 0; i < rc.size(); ++i) {
    const std::string tag = "rc_pairs[" + std::to_string(i) + "]";
    if (!rc[i].contains("resistance_ohm") || !rc[i].contains("capacitance_f")) {
      throw ValidationError(tag + ": needs resistance_ohm and capacitance_f");
    }
    p.rc.push_back({tableFromJson<2>(rc[i].at("resistance_ohm"), tag + ".resistance_ohm"),
                    tableFromJson<2>(rc[i].at("capacitance_f"), tag + ".capacitance_f")});
  }
  p.capacity_ah = tableFromJson<1>(j.at("capacity_ah"), "capacity_ah");
  p.validate();
  return p;
}

EcmParams loadParams(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::readTextFile(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    return paramsFromJson(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void saveParams(const EcmParams& params, const std::filesystem::path& path) {
  io::writeTextFile(path, toJson(params).dump(2) + "\n");
}

EcmParams resolveCell(const std::string& spec) {
  if (spec == "builtin:refcell" || spec.empty()) return refcell();
  if (spec == "builtin:refcell-2rc") return refcell2Rc();
  return loadParams(spec);
}

}  // namespace doeforge::ecm
