#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pcp/data.hpp"

namespace testing {

inline pcp::SchemaPtr make_schema(std::vector<pcp::Feature> features) {
  return std::make_shared<const pcp::CategoricalSchema>(std::move(features));
}

inline pcp::SchemaPtr default_schema() {
  return std::make_shared<const pcp::CategoricalSchema>(pcp::CategoricalSchema::default_insurance());
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pcp_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
