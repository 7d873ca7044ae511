#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace asplat::ply {

enum class Type { kFloat32, kUInt32, kInt32, kUInt8 };

struct Property {
  std::string name;
  Type type = Type::kFloat32;
};

// One vertex element, binary little-endian. Values travel as doubles; the
// writer casts to the declared property type.
struct Table {
  std::vector<std::string> comments;
  std::vector<Property> properties;
  std::size_t rows = 0;
  std::vector<double> values;  // rows × properties.size(), row-major

  int column(const std::string& name) const;  // -1 when absent
  double get(std::size_t row, int col) const { return values[row * properties.size() + col]; }
};

std::vector<std::uint8_t> write(const Table& table);
Table read(const std::vector<std::uint8_t>& bytes);

}  // namespace asplat::ply
