#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "json.hpp"

namespace banditlab {

enum class ColumnKind { Continuous, Categorical };

struct Bounds {
  double min = 0.0;
  double max = 1.0;
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  std::vector<std::string> categories;  // Categorical only
  std::optional<Bounds> bounds;         // Continuous only

  static ColumnSpec continuous(std::string name, std::optional<Bounds> bounds = std::nullopt) {
    return ColumnSpec{std::move(name), ColumnKind::Continuous, {}, bounds};
  }
  static ColumnSpec categorical(std::string name, std::vector<std::string> categories) {
    return ColumnSpec{std::move(name), ColumnKind::Categorical, std::move(categories), std::nullopt};
  }

  bool is_categorical() const { return kind == ColumnKind::Categorical; }
  std::size_t cardinality() const { return categories.size(); }

  std::optional<std::size_t> category_index(std::string_view label) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
      if (categories[i] == label) return i;
    return std::nullopt;
  }

  void validate() const {
    require(!name.empty(), ErrorCode::InvalidSchema, "column with empty name");
    if (is_categorical()) {
      require(!categories.empty(), ErrorCode::InvalidSchema, "column '" + name + "' has no categories");
      std::unordered_set<std::string> seen(categories.begin(), categories.end());
      require(seen.size() == categories.size(), ErrorCode::InvalidSchema,
              "column '" + name + "' has duplicate categories");
      require(!bounds, ErrorCode::InvalidSchema, "categorical column '" + name + "' has bounds");
    } else {
      require(categories.empty(), ErrorCode::InvalidSchema,
              "continuous column '" + name + "' has categories");
      if (bounds)
        require(bounds->min < bounds->max, ErrorCode::InvalidSchema,
                "column '" + name + "' has bounds.min >= bounds.max");
    }
  }

  bool operator==(const ColumnSpec& o) const {
    const bool same_bounds = bounds.has_value() == o.bounds.has_value() &&
                             (!bounds || (bounds->min == o.bounds->min && bounds->max == o.bounds->max));
    return name == o.name && kind == o.kind && categories == o.categories && same_bounds;
  }
};

/// Feature columns plus the treatment (arm) column and the outcome column.
struct Schema {
  std::vector<ColumnSpec> features;
  ColumnSpec arm;
  ColumnSpec outcome;

  std::size_t arm_count() const { return arm.cardinality(); }

  void validate() const {
    std::unordered_set<std::string> names;
    for (const auto& f : features) {
      f.validate();
      require(names.insert(f.name).second, ErrorCode::InvalidSchema, "duplicate feature '" + f.name + "'");
    }
    arm.validate();
    outcome.validate();
    require(arm.is_categorical() && arm.cardinality() >= 2, ErrorCode::InvalidSchema,
            "arm column must be categorical with at least 2 arms");
    require(!names.count(arm.name), ErrorCode::InvalidSchema, "arm column collides with a feature");
    require(!names.count(outcome.name) && outcome.name != arm.name, ErrorCode::InvalidSchema,
            "outcome column collides with another column");
    if (outcome.is_categorical()) {
      require(outcome.cardinality() == 2, ErrorCode::InvalidSchema, "categorical outcome must be binary");
    } else {
      require(!outcome.bounds || (outcome.bounds->min >= 0.0 && outcome.bounds->max <= 1.0),
              ErrorCode::InvalidSchema, "continuous outcome must lie in [0,1]");
    }
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    for (const auto& f : features) out.push_back(f.name);
    out.push_back(arm.name);
    out.push_back(outcome.name);
    return out;
  }

  bool operator==(const Schema& o) const {
    return features == o.features && arm == o.arm && outcome == o.outcome;
  }
};

/// One patient record. Categorical feature values are stored as category
/// indices; a binary categorical outcome is stored as 0/1.
struct Row {
  std::vector<double> values;
  std::size_t arm = 0;
  double outcome = 0.0;

  bool operator==(const Row&) const = default;
};

inline std::size_t category_of(double stored) { return static_cast<std::size_t>(stored); }

inline void validate_row(const Schema& schema, const Row& row, std::size_t row_number) {
  const auto where = [&](const std::string& col) {
    return "row " + std::to_string(row_number) + ", column '" + col + "'";
  };
  require(row.values.size() == schema.features.size(), ErrorCode::SchemaMismatch,
          "row " + std::to_string(row_number) + " has wrong arity");
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    const auto& col = schema.features[j];
    const double v = row.values[j];
    require(std::isfinite(v), ErrorCode::NonNumeric, where(col.name));
    if (col.is_categorical()) {
      require(v >= 0 && v == std::floor(v) && category_of(v) < col.cardinality(), ErrorCode::UnknownCategory,
              where(col.name));
    } else if (col.bounds) {
      require(v >= col.bounds->min && v <= col.bounds->max, ErrorCode::OutOfBounds, where(col.name));
    }
  }
  require(row.arm < schema.arm_count(), ErrorCode::UnknownCategory, where(schema.arm.name));
  require(std::isfinite(row.outcome), ErrorCode::NonNumeric, where(schema.outcome.name));
  if (schema.outcome.is_categorical()) {
    require(row.outcome == 0.0 || row.outcome == 1.0, ErrorCode::UnknownCategory, where(schema.outcome.name));
  } else {
    const double lo = schema.outcome.bounds ? schema.outcome.bounds->min : 0.0;
    const double hi = schema.outcome.bounds ? schema.outcome.bounds->max : 1.0;
    require(row.outcome >= lo && row.outcome <= hi, ErrorCode::OutOfBounds, where(schema.outcome.name));
  }
}

struct Dataset {
  Schema schema;
  std::vector<Row> rows;

  std::size_t size() const { return rows.size(); }

  void validate() const {
    schema.validate();
    require(!rows.empty(), ErrorCode::EmptyFile, "dataset has no rows");
    for (std::size_t i = 0; i < rows.size(); ++i) validate_row(schema, rows[i], i + 1);
  }

  std::vector<std::size_t> arm_counts() const {
    std::vector<std::size_t> counts(schema.arm_count(), 0);
    for (const auto& r : rows) ++counts[r.arm];
    return counts;
  }
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

inline std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses CSV text against a schema. `source` names the input in messages.
inline Dataset parse_csv(std::istream& in, const Schema& schema, const std::string& source = "<stream>") {
  schema.validate();
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \r\t") == std::string::npos)
    throw Error(ErrorCode::EmptyFile, source);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position[header[i]] = i;
  const auto names = schema.column_names();
  std::vector<std::size_t> index;
  for (const auto& name : names) {
    const auto it = position.find(name);
    require(it != position.end(), ErrorCode::MissingColumn, source + ": no column '" + name + "'");
    index.push_back(it->second);
  }
  require(header.size() == names.size(), ErrorCode::FormatError, source + ": header has unexpected columns");

  Dataset data{schema, {}};
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), ErrorCode::FormatError,
            source + ": line " + std::to_string(line_number) + " has " + std::to_string(cells.size()) +
                " fields, expected " + std::to_string(header.size()));
    const auto context = [&](const ColumnSpec& col, const std::string& value) {
      return source + ": line " + std::to_string(line_number) + ", column '" + col.name + "', value '" +
             value + "'";
    };
    const auto read_cell = [&](const ColumnSpec& col, const std::string& cell) -> double {
      if (col.is_categorical()) {
        const auto idx = col.category_index(cell);
        require(idx.has_value(), ErrorCode::UnknownCategory, context(col, cell));
        return static_cast<double>(*idx);
      }
      const auto v = detail::parse_double(cell);
      require(v.has_value(), ErrorCode::NonNumeric, context(col, cell));
      if (col.bounds)
        require(*v >= col.bounds->min && *v <= col.bounds->max, ErrorCode::OutOfBounds, context(col, cell));
      return *v;
    };
    Row row;
    row.values.reserve(schema.features.size());
    for (std::size_t j = 0; j < schema.features.size(); ++j)
      row.values.push_back(read_cell(schema.features[j], cells[index[j]]));
    row.arm = static_cast<std::size_t>(read_cell(schema.arm, cells[index[schema.features.size()]]));
    row.outcome = read_cell(schema.outcome, cells[index[schema.features.size() + 1]]);
    if (!schema.outcome.is_categorical()) {
      require(row.outcome >= 0.0 && row.outcome <= 1.0, ErrorCode::OutOfBounds,
              context(schema.outcome, cells[index.back()]));
    }
    data.rows.push_back(std::move(row));
  }
  require(!data.rows.empty(), ErrorCode::EmptyFile, source + ": no data rows");
  return data;
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open '" + path + "'");
  return parse_csv(in, schema, path);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  const auto names = data.schema.column_names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  const auto cell = [](const ColumnSpec& col, double v) {
    return col.is_categorical() ? col.categories[category_of(v)] : detail::format_double(v);
  };
  for (const auto& row : data.rows) {
    for (std::size_t j = 0; j < row.values.size(); ++j)
      out << cell(data.schema.features[j], row.values[j]) << ',';
    out << data.schema.arm.categories[row.arm] << ',' << cell(data.schema.outcome, row.outcome) << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write '" + path + "'");
  write_csv(out, data);
}

// ---------------------------------------------------------------------------
// Schema JSON

inline void to_json(nlohmann::json& j, const ColumnSpec& c) {
  j = nlohmann::json{{"name", c.name}, {"kind", c.is_categorical() ? "categorical" : "continuous"}};
  if (c.is_categorical()) j["categories"] = c.categories;
  if (c.bounds) j["bounds"] = {c.bounds->min, c.bounds->max};
}

inline void from_json(const nlohmann::json& j, ColumnSpec& c) {
  for (const auto& [key, _] : j.items())
    require(key == "name" || key == "kind" || key == "categories" || key == "bounds", ErrorCode::UnknownParameter,
            "column spec key '" + key + "'");
  c = ColumnSpec{};
  c.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  require(kind == "continuous" || kind == "categorical", ErrorCode::InvalidSchema, "column kind '" + kind + "'");
  c.kind = kind == "categorical" ? ColumnKind::Categorical : ColumnKind::Continuous;
  if (j.contains("categories")) c.categories = j.at("categories").get<std::vector<std::string>>();
  if (j.contains("bounds")) {
    const auto b = j.at("bounds").get<std::vector<double>>();
    require(b.size() == 2, ErrorCode::InvalidSchema, "bounds must be [min, max]");
    c.bounds = Bounds{b[0], b[1]};
  }
}

inline void to_json(nlohmann::json& j, const Schema& s) {
  j = nlohmann::json{{"features", s.features}, {"arm", s.arm}, {"outcome", s.outcome}};
}

inline void from_json(const nlohmann::json& j, Schema& s) {
  for (const auto& [key, _] : j.items())
    require(key == "features" || key == "arm" || key == "outcome", ErrorCode::UnknownParameter,
            "schema key '" + key + "'");
  s.features = j.at("features").get<std::vector<ColumnSpec>>();
  s.arm = j.at("arm").get<ColumnSpec>();
  s.outcome = j.at("outcome").get<ColumnSpec>();
  s.validate();
}

/// The oncology case-study layout: three continuous covariates, three binary
/// categorical covariates, seven regimens A-G and a [0,1] response score.
inline Schema case_study_schema() {
  Schema s;
  s.features = {
      ColumnSpec::continuous("age", Bounds{18, 90}),
      ColumnSpec::continuous("tumor_size", Bounds{0.1, 15}),
      ColumnSpec::continuous("nodes_positive", Bounds{0, 30}),
      ColumnSpec::categorical("lymph_node_status", {"N1", "N2"}),
      ColumnSpec::categorical("kras", {"wild", "mutant"}),
      ColumnSpec::categorical("sex", {"F", "M"}),
  };
  s.arm = ColumnSpec::categorical("arm", {"A", "B", "C", "D", "E", "F", "G"});
  s.outcome = ColumnSpec::continuous("outcome", Bounds{0, 1});
  return s;
}

}  // namespace banditlab
