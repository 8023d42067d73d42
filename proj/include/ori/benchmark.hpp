#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace ori {

/// Benchmark identifier. Names are case-normalized to uppercase ASCII so
/// "MuSR", "MUSR" and "musr" compare equal. Construction rejects empty names;
/// the default constructor exists only for containers and deserialization.
class BenchmarkId {
 public:
  BenchmarkId() = default;
  explicit BenchmarkId(std::string_view name);

  const std::string& name() const { return name_; }
  bool empty() const { return name_.empty(); }

  auto operator<=>(const BenchmarkId&) const = default;

 private:
  std::string name_;
};

}  // namespace ori
