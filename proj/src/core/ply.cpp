#include "asplat/ply.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "asplat/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

namespace asplat::ply {
namespace {

const char* type_name(Type t) {
  switch (t) {
    case Type::kFloat32: return "float";
    case Type::kUInt32: return "uint";
    case Type::kInt32: return "int";
    case Type::kUInt8: return "uchar";
  }
  return "float";
}

std::size_t type_size(Type t) { return t == Type::kUInt8 ? 1 : 4; }

bool parse_type(const std::string& s, Type* out) {
  if (s == "float" || s == "float32") *out = Type::kFloat32;
  else if (s == "uint" || s == "uint32") *out = Type::kUInt32;
  else if (s == "int" || s == "int32") *out = Type::kInt32;
  else if (s == "uchar" || s == "uint8") *out = Type::kUInt8;
  else return false;
  return true;
}

}  // namespace

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < properties.size(); ++i)
    if (properties[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::uint8_t> write(const Table& table) {
  require(table.values.size() == table.rows * table.properties.size(), ErrorCode::kContract,
          "ply: value count does not match rows × properties");
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : table.comments) {
    require(c.find('\n') == std::string::npos, ErrorCode::kContract,
            "ply: comment contains a newline");
    header << "comment " << c << "\n";
  }
  header << "element vertex " << table.rows << "\n";
  for (const auto& p : table.properties)
    header << "property " << type_name(p.type) << " " << p.name << "\n";
  header << "end_header\n";
  const std::string h = header.str();

  std::size_t stride = 0;
  for (const auto& p : table.properties) stride += type_size(p.type);
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(h.size() + stride * table.rows);
  const std::size_t ncol = table.properties.size();
  for (std::size_t r = 0; r < table.rows; ++r) {
    for (std::size_t c = 0; c < ncol; ++c) {
      const double v = table.values[r * ncol + c];
      std::uint8_t buf[4];
      switch (table.properties[c].type) {
        case Type::kFloat32: {
          const float f = static_cast<float>(v);
          std::memcpy(buf, &f, 4);
          break;
        }
        case Type::kUInt32: {
          const auto u = static_cast<std::uint32_t>(v);
          std::memcpy(buf, &u, 4);
          break;
        }
        case Type::kInt32: {
          const auto i = static_cast<std::int32_t>(v);
          std::memcpy(buf, &i, 4);
          break;
        }
        case Type::kUInt8:
          buf[0] = static_cast<std::uint8_t>(v);
          break;
      }
      out.insert(out.end(), buf, buf + type_size(table.properties[c].type));
    }
  }
  return out;
}

Table read(const std::vector<std::uint8_t>& bytes) {
  Table table;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    require(pos < bytes.size(), ErrorCode::kParse, "ply: truncated header");
    std::string line(bytes.begin() + start, bytes.begin() + pos);
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  require(next_line() == "ply", ErrorCode::kParse, "ply: missing magic");
  bool in_vertex = false;
  bool seen_vertex = false;
  for (;;) {
    const std::string line = next_line();
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      require(fmt == "binary_little_endian", ErrorCode::kParse,
              "ply: unsupported format '" + fmt + "'");
    } else if (key == "comment") {
      table.comments.push_back(line.size() > 8 ? line.substr(8) : std::string());
    } else if (key == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      require(name == "vertex" && !seen_vertex, ErrorCode::kParse,
              "ply: unexpected element '" + name + "'");
      require(count >= 0, ErrorCode::kParse, "ply: bad vertex count");
      table.rows = static_cast<std::size_t>(count);
      in_vertex = seen_vertex = true;
    } else if (key == "property") {
      require(in_vertex, ErrorCode::kParse, "ply: property outside vertex element");
      std::string type, name;
      ls >> type >> name;
      Property p;
      p.name = name;
      require(type != "list" && parse_type(type, &p.type), ErrorCode::kParse,
              "ply: unsupported property type '" + type + "' for '" + name + "'");
      table.properties.push_back(p);
    } else if (key == "obj_info") {
    } else {
      fail(ErrorCode::kParse, "ply: unknown header line '" + line + "'");
    }
  }
  require(seen_vertex, ErrorCode::kParse, "ply: no vertex element");

  std::size_t stride = 0;
  for (const auto& p : table.properties) stride += type_size(p.type);
  require(bytes.size() - pos == stride * table.rows, ErrorCode::kParse,
          "ply: body size does not match header");
  const std::size_t ncol = table.properties.size();
  table.values.resize(table.rows * ncol);
  for (std::size_t r = 0; r < table.rows; ++r) {
    for (std::size_t c = 0; c < ncol; ++c) {
      const std::uint8_t* src = bytes.data() + pos;
      double v = 0;
      switch (table.properties[c].type) {
        case Type::kFloat32: {
          float f;
          std::memcpy(&f, src, 4);
          require(std::isfinite(f), ErrorCode::kParse,
                  "ply: non-finite value in vertex " + std::to_string(r) + " property '" +
                      table.properties[c].name + "'");
          v = f;
          break;
        }
        case Type::kUInt32: {
          std::uint32_t u;
          std::memcpy(&u, src, 4);
          v = u;
          break;
        }
        case Type::kInt32: {
          std::int32_t i;
          std::memcpy(&i, src, 4);
          v = i;
          break;
        }
        case Type::kUInt8:
          v = *src;
          break;
      }
      table.values[r * ncol + c] = v;
      pos += type_size(table.properties[c].type);
    }
  }
  return table;
}

}  // namespace asplat::ply
