#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dpsim/common.hpp"
#include "dpsim/control/control.hpp"

namespace dpsim::control
{

DPSIM_DEFINE_ERROR(UnknownParam);
DPSIM_DEFINE_ERROR(InvalidValue);
DPSIM_DEFINE_ERROR(ManifestError);

struct ParamSpec
{
  std::string name;
  double default_value{0.0};
  double min{0.0};
  double max{0.0};
  bool integer{false};
  std::string unit;
  std::string description;
};

struct SlotSpec
{
  std::string name;
  std::string default_value;
  std::vector<std::string> options;
};

/// Declared parameters and algorithm slots with their bounds.
class ParamManifest
{
public:
  ParamManifest() = default;
  ParamManifest(std::vector<ParamSpec> params, std::vector<SlotSpec> slots);

  /// Built-in manifest (what data/params_manifest.json ships).
  [[nodiscard]] static ParamManifest builtin();
  [[nodiscard]] static ParamManifest from_json(const nlohmann::json & j);
  [[nodiscard]] static ParamManifest load(const std::filesystem::path & path);
  [[nodiscard]] nlohmann::json to_json() const;

  [[nodiscard]] const std::vector<ParamSpec> & params() const { return params_; }
  [[nodiscard]] const std::vector<SlotSpec> & slots() const { return slots_; }
  [[nodiscard]] const ParamSpec * find(std::string_view name) const;
  [[nodiscard]] const SlotSpec * find_slot(std::string_view name) const;

  /// Throws UnknownParam or InvalidValue.
  void check(std::string_view name, double value) const;
  void check_slot(std::string_view slot, std::string_view algorithm) const;

private:
  std::vector<ParamSpec> params_;
  std::vector<SlotSpec> slots_;
};

/// Immutable, complete view of every parameter at one version.
struct ParamSnapshot
{
  std::uint64_t version{0};
  std::map<std::string, double, std::less<>> values;
  std::map<std::string, std::string, std::less<>> slots;

  /// Throws UnknownParam when absent.
  [[nodiscard]] double get(std::string_view name) const;
  [[nodiscard]] const std::string & slot(std::string_view name) const;
  [[nodiscard]] Vector3 axes(std::string_view prefix) const;  // prefix.{x,y,psi}

  [[nodiscard]] PidGains pid() const;
  [[nodiscard]] ReferenceGains reference() const;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Versioned parameter store. Readers take a shared snapshot without
/// blocking writers for longer than a pointer swap; every successful
/// write bumps the version by one.
class ParamRegistry
{
public:
  explicit ParamRegistry(ParamManifest manifest = ParamManifest::builtin());

  [[nodiscard]] std::shared_ptr<const ParamSnapshot> snapshot() const;
  [[nodiscard]] std::uint64_t version() const;
  [[nodiscard]] const ParamManifest & manifest() const { return manifest_; }

  /// Returns the new version. Throws UnknownParam / InvalidValue, leaving the
  /// registry untouched.
  std::uint64_t set(std::string_view name, double value);

  /// All-or-nothing batch, one version bump.
  std::uint64_t set_many(const std::vector<std::pair<std::string, double>> & values);

  std::uint64_t bind(std::string_view slot, std::string_view algorithm);

private:
  ParamManifest manifest_;
  mutable std::mutex mutex_;
  std::shared_ptr<const ParamSnapshot> current_;
};

}  // namespace dpsim::control
