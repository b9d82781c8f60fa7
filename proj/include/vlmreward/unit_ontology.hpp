#pragma once

// Unit-type ontology: named clusters of raw unit labels. The built-in
// "curated-v1" ontology has the 26 PhyX unit clusters with curated member
// labels, so it can be used without any judge calls.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmreward/error.hpp"
#include "vlmreward/text.hpp"

namespace vlmreward {

inline constexpr std::string_view kNoneCategory = "none";

struct UnitCluster {
  std::string name;
  std::vector<std::string> members;
  std::optional<std::size_t> reference_count;  // problem count in the source table, if known
};

class UnitOntology {
 public:
  UnitOntology() = default;
  UnitOntology(std::vector<UnitCluster> clusters, std::string version)
      : clusters_(std::move(clusters)), version_(std::move(version)) {
    validate();
  }

  static const UnitOntology& curated_v1();

  const std::vector<UnitCluster>& clusters() const { return clusters_; }
  const std::string& version() const { return version_; }
  std::size_t size() const { return clusters_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : clusters_) out.push_back(c.name);
    return out;
  }

  // Cluster whose name is `s` (case-insensitive, spacing-normalized).
  std::optional<std::string> find_name(std::string_view s) const {
    const auto n = text::normalize_spacing(s);
    for (const auto& c : clusters_) {
      if (text::normalize_spacing(c.name) == n) return c.name;
    }
    return std::nullopt;
  }

  // Cluster containing member label `label`. Matching is exact after
  // whitespace trimming, then case-insensitive when that is unambiguous
  // ("mA" and "MA" differ, "Joule" finds "joule").
  std::optional<std::string> cluster_of(std::string_view label) const {
    const auto exact = collapse(label);
    if (auto it = exact_.find(exact); it != exact_.end()) return clusters_[it->second].name;
    const auto lower = text::to_lower(exact);
    std::optional<std::string> hit;
    for (const auto& c : clusters_) {
      for (const auto& m : c.members) {
        if (text::to_lower(collapse(m)) == lower) {
          if (hit && *hit != c.name) return std::nullopt;
          hit = c.name;
        }
      }
    }
    return hit;
  }

  std::map<std::string, std::vector<std::string>> as_map() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& c : clusters_) out[c.name] = c.members;
    return out;
  }

 private:
  static std::string collapse(std::string_view s) {
    std::string out;
    bool space = false;
    for (char ch : text::trim(s)) {
      if (text::is_space(ch)) {
        space = true;
        continue;
      }
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(ch);
    }
    return out;
  }

  void validate() {
    exact_.clear();
    std::map<std::string, std::size_t> names;
    for (std::size_t i = 0; i < clusters_.size(); ++i) {
      const auto& c = clusters_[i];
      const auto key = text::normalize_spacing(c.name);
      if (key.empty()) throw ValidationError("ontology cluster names must not be empty");
      if (key == kNoneCategory) throw ValidationError("'none' is reserved and cannot name a cluster");
      if (!names.emplace(key, i).second) throw ValidationError("duplicate ontology cluster '" + c.name + "'");
      for (const auto& m : c.members) {
        const auto mk = collapse(m);
        if (mk.empty()) throw ValidationError("empty member label in cluster '" + c.name + "'");
        if (auto [it, inserted] = exact_.emplace(mk, i); !inserted && it->second != i) {
          throw ValidationError("label '" + m + "' is in clusters '" + clusters_[it->second].name +
                                "' and '" + c.name + "'");
        }
      }
    }
  }

  std::vector<UnitCluster> clusters_;
  std::string version_;
  std::map<std::string, std::size_t> exact_;
};

inline const UnitOntology& UnitOntology::curated_v1() {
  static const UnitOntology kOntology(
      {
          {"Length / Distance",
           {"m", "meter", "meters", "metre", "metres", "cm", "centimeter", "centimeters", "mm", "millimeter",
            "millimeters", "km", "kilometer", "kilometers", "length", "distance", "displacement", "height",
            "radius", "position"},
           759},
          {"Speed / Velocity",
           {"m/s", "meters per second", "km/h", "kilometers per hour", "cm/s", "speed", "velocity"},
           200},
          {"Time", {"s", "sec", "second", "seconds", "ms", "millisecond", "min", "minute", "minutes", "hr",
                    "hour", "hours", "time", "period", "duration"},
           117},
          {"Energy", {"J", "joule", "joules", "kJ", "kilojoule", "eV", "electronvolt", "kWh", "energy", "work",
                      "kinetic energy", "potential energy"},
           305},
          {"Force", {"N", "newton", "newtons", "kN", "force", "tension", "weight"}, 208},
          {"Frequency / Angular Frequency",
           {"Hz", "hertz", "kHz", "MHz", "rad/s", "radians per second", "rpm", "frequency", "angular frequency",
            "angular velocity"},
           149},
          {"Angle", {"°", "deg", "degree", "degrees", "rad", "radian", "radians", "angle"}, 151},
          {"Acceleration", {"m/s^2", "m/s²", "meters per second squared", "acceleration"}, 33},
          {"Pressure", {"Pa", "pascal", "kPa", "atm", "atmosphere", "bar", "mmHg", "N/m^2", "pressure"}, 53},
          {"Mass / Momentum",
           {"kg", "kilogram", "kilograms", "g", "gram", "grams", "mass", "kg·m/s", "kg m/s", "N·s", "momentum",
            "impulse"},
           79},
          {"Voltage / Electric Potential",
           {"V", "volt", "volts", "mV", "kV", "voltage", "potential difference", "electric potential", "emf"},
           91},
          {"Electric Field / Flux",
           {"N/C", "V/m", "electric field", "electric flux", "N·m²/C", "V·m"},
           71},
          {"Electric Current", {"A", "ampere", "amperes", "amp", "amps", "mA", "current", "electric current"}, 53},
          {"Resistance", {"Ω", "ohm", "ohms", "kΩ", "resistance", "resistivity", "Ω·m"}, 19},
          {"Power / Intensity (W)",
           {"W", "watt", "watts", "kW", "mW", "power", "W/m^2", "W/m²", "intensity"},
           85},
          {"Temperature", {"K", "kelvin", "°C", "celsius", "degrees celsius", "°F", "fahrenheit", "temperature"},
           62},
          {"Magnetic Field / Flux",
           {"T", "tesla", "mT", "μT", "gauss", "Wb", "weber", "magnetic field", "magnetic flux"},
           46},
          {"Electric Charge / Charge Density",
           {"C", "coulomb", "coulombs", "μC", "nC", "C/m", "C/m^2", "C/m²", "charge", "electric charge",
            "charge density"},
           53},
          {"Capacitance / Inductance",
           {"F", "farad", "μF", "pF", "nF", "H", "henry", "mH", "capacitance", "inductance"},
           19},
          {"Torque / Rotational Mechanics",
           {"N·m", "N m", "torque", "kg·m²", "kg m^2", "moment of inertia", "angular momentum", "rad/s^2",
            "angular acceleration"},
           17},
          {"Dimensionless / Ratios / Counts",
           {"dimensionless", "unitless", "ratio", "count", "number", "percent", "%", "efficiency", "coefficient",
            "fraction"},
           226},
          {"Thermodynamics / Heat / Entropy",
           {"J/K", "entropy", "heat", "cal", "calorie", "calories", "J/(kg·K)", "J/(kg K)", "specific heat",
            "heat capacity", "J/mol·K"},
           65},
          {"Optics (wavelength, magnification, refractive index)",
           {"nm", "nanometer", "nanometers", "wavelength", "magnification", "refractive index", "diopter",
            "diopters", "focal length", "optical power"},
           85},
          {"Sound / Decibel / Acoustic Intensity",
           {"dB", "decibel", "decibels", "sound level", "sound intensity level", "loudness"},
           20},
          {"Nuclear & Particle Physics",
           {"MeV", "GeV", "keV", "Bq", "becquerel", "Ci", "curie", "u", "amu", "atomic mass unit", "half-life",
            "decay constant", "binding energy"},
           30},
          {"Quantum Mechanics / Action",
           {"J·s", "J s", "eV·s", "action", "planck constant", "angular momentum quantum"},
           10},
      },
      "curated-v1");
  return kOntology;
}

inline nlohmann::ordered_json to_json(const UnitOntology& o) {
  nlohmann::ordered_json j;
  j["version"] = o.version();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : o.clusters()) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["members"] = c.members;
    if (c.reference_count) cj["reference_count"] = *c.reference_count;
    arr.push_back(std::move(cj));
  }
  j["clusters"] = std::move(arr);
  return j;
}

inline UnitOntology ontology_from_json(const nlohmann::json& j) {
  try {
    std::vector<UnitCluster> clusters;
    for (const auto& cj : j.at("clusters")) {
      UnitCluster c;
      c.name = cj.at("name").get<std::string>();
      c.members = cj.at("members").get<std::vector<std::string>>();
      if (cj.contains("reference_count")) c.reference_count = cj.at("reference_count").get<std::size_t>();
      clusters.push_back(std::move(c));
    }
    return UnitOntology(std::move(clusters), j.at("version").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed ontology: ") + e.what());
  }
}

inline UnitOntology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open ontology " + path.string());
  try {
    return ontology_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("ontology " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace vlmreward
