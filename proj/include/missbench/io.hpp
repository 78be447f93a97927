#pragma once

// File formats: data CSV (header row, numeric cells, empty cell = missing),
// mask CSV (0/1, no header) and JSON encodings of pattern parameters.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "missbench/core.hpp"
#include "missbench/missingness.hpp"

namespace missbench {

using Json = nlohmann::ordered_json;

class ParseError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur.push_back('"');
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::string format_double(double v) {
  if (is_missing(v)) return {};
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// A parsed data CSV. Empty cells become kMissing.
struct Table {
  std::vector<std::string> names;
  Matrix values;
  std::vector<std::pair<Index, Index>> empty_cells;
};

inline Table read_table(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty file");
  Table t;
  t.names = detail::split_csv_line(lines.front());
  const auto n = static_cast<Index>(t.names.size());
  const auto m = static_cast<Index>(lines.size()) - 1;
  if (m < 1) throw ParseError(path.string() + ": no data rows");
  t.values.resize(m, n);
  for (Index i = 0; i < m; ++i) {
    const auto cells = detail::split_csv_line(lines[static_cast<std::size_t>(i + 1)]);
    if (static_cast<Index>(cells.size()) != n) {
      throw ParseError(path.string() + ": data row " + std::to_string(i) + " has " +
                       std::to_string(cells.size()) + " cells, header has " + std::to_string(n));
    }
    for (Index j = 0; j < n; ++j) {
      const std::string& c = cells[static_cast<std::size_t>(j)];
      if (c.empty()) {
        t.values(i, j) = kMissing;
        t.empty_cells.emplace_back(i, j);
      } else if (!detail::parse_double(c, t.values(i, j))) {
        throw ParseError(path.string() + ": non-numeric cell '" + c + "' at (row " +
                         std::to_string(i) + ", column '" + t.names[static_cast<std::size_t>(j)] +
                         "')");
      }
    }
  }
  return t;
}

/// Writes a header row plus values in shortest round-trip form; NaN -> empty.
inline void write_table(const std::filesystem::path& path, const std::vector<std::string>& names,
                        const Matrix& values) {
  if (static_cast<Index>(names.size()) != values.cols())
    throw InvalidArgument("write_table: name count does not match column count");
  auto out = detail::open_for_write(path);
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << detail::format_double(values(i, j));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

inline std::vector<std::string> default_column_names(Index n) {
  std::vector<std::string> names;
  for (Index j = 0; j < n; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

struct DatasetRecord {
  std::string name;
  std::filesystem::path source;
  DataMatrix matrix;
  std::vector<std::string> column_names;
  std::string provenance;
};

/// Loads a complete numeric CSV; any empty cell is rejected with its location.
inline DatasetRecord load_csv(const std::filesystem::path& path) {
  Table t = read_table(path);
  if (!t.empty_cells.empty()) {
    std::ostringstream msg;
    msg << path.string() << ": pre-existing missing cells at";
    for (const auto& [i, j] : t.empty_cells) {
      msg << " (row " << i << ", column '" << t.names[static_cast<std::size_t>(j)] << "')";
    }
    throw ParseError(msg.str());
  }
  return DatasetRecord{path.stem().string(), path, DataMatrix(std::move(t.values)),
                       std::move(t.names), "csv:" + path.filename().string()};
}

inline void save_csv(const std::filesystem::path& path, const DatasetRecord& rec) {
  write_table(path, rec.column_names, rec.matrix.values());
}

inline Mask read_mask_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty mask file");
  const auto m = static_cast<Index>(lines.size());
  const auto n = static_cast<Index>(detail::split_csv_line(lines.front()).size());
  MaskBits bits(m, n);
  for (Index i = 0; i < m; ++i) {
    const auto cells = detail::split_csv_line(lines[static_cast<std::size_t>(i)]);
    if (static_cast<Index>(cells.size()) != n)
      throw ParseError(path.string() + ": ragged mask row " + std::to_string(i));
    for (Index j = 0; j < n; ++j) {
      const std::string& c = cells[static_cast<std::size_t>(j)];
      if (c != "0" && c != "1")
        throw ParseError(path.string() + ": mask cell '" + c + "' at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ") is not 0/1");
      bits(i, j) = c == "1" ? 1 : 0;
    }
  }
  return Mask(std::move(bits));
}

inline void write_mask_csv(const std::filesystem::path& path, const Mask& mask) {
  auto out = detail::open_for_write(path);
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) out << (j ? "," : "") << (mask.observed(i, j) ? '1' : '0');
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = detail::open_for_write(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pattern parameters <-> JSON. Unknown keys are rejected; absent keys keep
// their defaults.

namespace detail {

class ParamCodec {
 public:
  ParamCodec(Json* out, const Json* in) : out_(out), in_(in) {}

  template <class T>
  void field(const char* key, T& value) {
    if (out_) {
      (*out_)[key] = value;
    } else if (in_->contains(key)) {
      try {
        value = in_->at(key).get<T>();
      } catch (const nlohmann::json::exception&) {
        throw InvalidArgument(std::string("pattern parameter '") + key + "' has the wrong type");
      }
      seen_.emplace_back(key);
    }
  }

  void bandit(BanditConfig& b) {
    if (out_) {
      (*out_)["algorithm"] = std::string(bandit_name(b.algorithm));
    } else if (in_->contains("algorithm")) {
      b.algorithm = parse_bandit(in_->at("algorithm").get<std::string>());
      seen_.emplace_back("algorithm");
    }
    field("epsilon", b.epsilon);
    field("epsilon_decay", b.epsilon_decay);
    field("pooling", b.pooling);
    field("reward_noise_scale", b.reward_noise_scale);
    field("ucb_scale", b.ucb_scale);
    field("gradient_step", b.gradient_step);
  }

  void finish() const {
    if (out_) return;
    for (const auto& [key, value] : in_->items()) {
      if (key == "pattern" || key == "seed") continue;
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw InvalidArgument("unknown pattern parameter '" + key + "'");
    }
  }

 private:
  Json* out_;
  const Json* in_;
  std::vector<std::string> seen_;
};

inline void codec(ParamCodec& c, params::Mcar& p) { c.field("p_missing", p.p_missing); }
inline void codec(ParamCodec& c, params::ColMar& p) {
  c.field("p_missing", p.p_missing);
  c.field("predictor_fraction", p.predictor_fraction);
}
inline void codec(ParamCodec& c, params::NnMnar& p) {
  c.field("p_missing", p.p_missing);
  c.field("neighborhood_low", p.neighborhood.low);
  c.field("neighborhood_high", p.neighborhood.high);
  c.field("layers_low", p.layers.low);
  c.field("layers_high", p.layers.high);
  c.field("width_low", p.width.low);
  c.field("width_high", p.width.high);
}
inline void codec(ParamCodec& c, params::SelfMasking& p) {
  c.field("p_missing", p.p_missing);
  c.field("target_cols", p.target_cols);
}
inline void codec(ParamCodec& c, params::Censoring& p) { c.field("q_censor", p.q_censor); }
inline void codec(ParamCodec&, params::Panel&) {}
inline void codec(ParamCodec& c, params::PolarizationHard& p) { c.field("q_thresh", p.q_thresh); }
inline void codec(ParamCodec& c, params::PolarizationSoft& p) {
  c.field("alpha", p.alpha);
  c.field("eps", p.eps);
}
inline void codec(ParamCodec& c, params::LatentFactor& p) {
  c.field("k_low", p.k_low);
  c.field("k_high", p.k_high);
}
inline void codec(ParamCodec& c, params::Cluster& p) {
  c.field("row_clusters", p.row_clusters);
  c.field("col_clusters", p.col_clusters);
  c.field("tau_r", p.tau_r);
  c.field("tau_c", p.tau_c);
  c.field("eps_std", p.eps_std);
}
inline void codec(ParamCodec& c, params::TwoPhase& p) {
  c.field("f_cheap", p.f_cheap);
  c.field("alpha", p.alpha);
  c.field("beta", p.beta);
}
inline void codec(ParamCodec& c, params::Block& p) {
  c.field("p_missing", p.p_missing);
  c.field("row_blocks", p.row_blocks);
  c.field("col_blocks", p.col_blocks);
}
inline void codec(ParamCodec& c, params::Seq& p) {
  c.field("p_missing", p.p_missing);
  c.bandit(p.bandit);
}

}  // namespace detail

inline Json to_json(const PatternParams& params) {
  Json j;
  j["pattern"] = std::string(pattern_key(static_cast<Pattern>(params.index())));
  PatternParams copy = params;
  detail::ParamCodec c(&j, nullptr);
  std::visit([&](auto& p) { detail::codec(c, p); }, copy);
  return j;
}

/// Overrides the defaults of `pattern` with the keys present in `j`.
inline PatternParams params_from_json(Pattern pattern, const Json& j) {
  if (!j.is_object()) throw InvalidArgument("pattern parameters must be a JSON object");
  PatternParams params = default_params(pattern);
  detail::ParamCodec c(nullptr, &j);
  std::visit([&](auto& p) { detail::codec(c, p); }, params);
  c.finish();
  return params;
}

inline PatternParams params_from_json(const Json& j) {
  if (!j.contains("pattern")) throw InvalidArgument("pattern parameters lack a 'pattern' key");
  return params_from_json(parse_pattern(j.at("pattern").get<std::string>()), j);
}

}  // namespace missbench
