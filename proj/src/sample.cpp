#include "biasbound/sample.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "biasbound/error.hpp"

namespace bb {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::capacity: return "capacity error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::rank: return "rank error";
    case ErrorKind::degenerate: return "degenerate error";
    case ErrorKind::numerical: return "numerical error";
  }
  return "error";
}

namespace {

constexpr const char* kModule = "sample_core";

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, kModule, msg); }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      current.push_back(c);
    } else if (c == ',' && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string row_label(std::size_t row, std::size_t line) {
  std::ostringstream os;
  os << "row " << row << " (line " << line << ")";
  return os.str();
}

}  // namespace

bool natural_id_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string_view na(a.data() + i, ie - i), nb(b.data() + j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

bool location_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// ---------------------------------------------------------------- DesignView

DesignView::DesignView(std::vector<Row> rows) : rows_(std::move(rows)) {
  if (!rows_.empty()) p_ = rows_.front().x.size();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!position_.emplace(rows_[i].id, i).second) fail(ErrorKind::validation, "duplicate unit id '" + rows_[i].id + "'");
  }
}

std::size_t DesignView::count(int arm) const {
  return static_cast<std::size_t>(
      std::count_if(rows_.begin(), rows_.end(), [arm](const Row& r) { return r.d == arm; }));
}

const DesignView::Row& DesignView::at(const std::string& id) const {
  auto it = position_.find(id);
  if (it == position_.end()) fail(ErrorKind::contract, "unknown unit id '" + id + "'");
  return rows_[it->second];
}

DesignView DesignView::restrict(const SubsampleHandle& sub) const {
  std::vector<Row> out;
  out.reserve(sub.size());
  for (const auto& id : sub.member_ids()) out.push_back(at(id));
  return DesignView(std::move(out));
}

// -------------------------------------------------------------------- Sample

Sample::Sample(std::vector<Unit> units, bool design_only)
    : units_(std::move(units)), design_only_(design_only) {
  if (units_.empty()) fail(ErrorKind::validation, "no units");
  p_ = units_.front().x.size();
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const Unit& u = units_[i];
    if (u.d != 0 && u.d != 1) fail(ErrorKind::validation, "unit '" + u.id + "': d must be 0 or 1");
    if (u.x.size() != p_) fail(ErrorKind::validation, "unit '" + u.id + "': covariate length differs from p");
    if (!u.y && !design_only_) fail(ErrorKind::validation, "unit '" + u.id + "': missing y without design-only flag");
    if (!position_.emplace(u.id, i).second) fail(ErrorKind::validation, "duplicate unit id '" + u.id + "'");
  }
}

Sample Sample::load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::parse, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

Sample Sample::parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorKind::validation, "no units");
  if (!header.empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::validation, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column(schema.id_column);
  const std::size_t y_col = column(schema.y_column);
  const std::size_t d_col = column(schema.d_column);

  std::vector<std::size_t> x_cols;
  if (!schema.x_columns.empty()) {
    for (const auto& name : schema.x_columns) x_cols.push_back(column(name));
  } else {
    std::vector<std::pair<long, std::size_t>> found;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const auto& h = header[c];
      if (h.size() >= 2 && h[0] == 'x' &&
          std::all_of(h.begin() + 1, h.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
        found.emplace_back(std::stol(h.substr(1)), c);
    }
    std::sort(found.begin(), found.end());
    for (std::size_t k = 0; k < found.size(); ++k) {
      if (found[k].first != static_cast<long>(k + 1))
        fail(ErrorKind::validation, "missing column 'x" + std::to_string(k + 1) + "'");
      x_cols.push_back(found[k].second);
    }
  }

  std::vector<Unit> units;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      std::ostringstream os;
      os << row_label(row, line_no) << ": expected " << header.size() << " fields, found " << fields.size();
      fail(ErrorKind::parse, os.str());
    }
    Unit u;
    u.id = fields[id_col];
    if (u.id.empty()) fail(ErrorKind::parse, row_label(row, line_no) + ": empty id");
    if (!fields[y_col].empty()) {
      auto y = parse_real(fields[y_col]);
      if (!y) fail(ErrorKind::parse, row_label(row, line_no) + ": cannot parse y '" + fields[y_col] + "'");
      u.y = *y;
    } else if (!schema.design_only) {
      fail(ErrorKind::validation, row_label(row, line_no) + ": missing y (data not flagged design-only)");
    }
    auto d = parse_real(fields[d_col]);
    if (!d) fail(ErrorKind::parse, row_label(row, line_no) + ": cannot parse d '" + fields[d_col] + "'");
    if (*d != 0.0 && *d != 1.0)
      fail(ErrorKind::validation, row_label(row, line_no) + ": d must be 0 or 1, found '" + fields[d_col] + "'");
    u.d = static_cast<int>(*d);
    for (std::size_t c : x_cols) {
      auto v = parse_real(fields[c]);
      if (!v) fail(ErrorKind::parse, row_label(row, line_no) + ": cannot parse " + header[c] + " '" + fields[c] + "'");
      u.x.push_back(*v);
    }
    units.push_back(std::move(u));
  }
  if (units.empty()) fail(ErrorKind::validation, "no units");
  return Sample(std::move(units), schema.design_only);
}

std::size_t Sample::count(int arm) const {
  return static_cast<std::size_t>(
      std::count_if(units_.begin(), units_.end(), [arm](const Unit& u) { return u.d == arm; }));
}

void Sample::require_outcomes(const std::string& module) const {
  for (const auto& u : units_)
    if (!u.y) throw Error(ErrorKind::validation, module, "unit '" + u.id + "' has no outcome; design-only data cannot be analyzed");
  if (count(0) == 0 || count(1) == 0) throw Error(ErrorKind::validation, module, "both arms must be non-empty");
  if (size() < 2) throw Error(ErrorKind::validation, module, "at least two units required");
}

std::optional<std::size_t> Sample::find(const std::string& id) const {
  auto it = position_.find(id);
  if (it == position_.end()) return std::nullopt;
  return it->second;
}

DesignView Sample::design_view() const {
  std::vector<DesignView::Row> rows;
  rows.reserve(units_.size());
  for (const auto& u : units_) rows.push_back({u.id, u.x, u.d});
  return DesignView(std::move(rows));
}

Sample Sample::subset(const SubsampleHandle& sub) const {
  std::vector<Unit> out;
  out.reserve(sub.size());
  for (const auto& id : sub.member_ids()) {
    auto pos = find(id);
    if (!pos) fail(ErrorKind::contract, "subsample member '" + id + "' is not in the sample");
    out.push_back(units_[*pos]);
  }
  return Sample(std::move(out), design_only_);
}

Sample Sample::with_outcomes(std::span<const double> y) const {
  if (y.size() != units_.size()) fail(ErrorKind::contract, "outcome vector length differs from sample size");
  std::vector<Unit> out = units_;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].y = y[i];
  return Sample(std::move(out), false);
}

// ----------------------------------------------------------- SubsampleHandle

SubsampleHandle::SubsampleHandle(const DesignView& parent, std::vector<std::string> member_ids,
                                 Provenance provenance)
    : member_ids_(std::move(member_ids)), provenance_(std::move(provenance)) {
  std::unordered_set<std::string> seen;
  for (const auto& id : member_ids_) {
    if (!parent.contains(id)) fail(ErrorKind::contract, "subsample member '" + id + "' is not in the parent sample");
    if (!seen.insert(id).second) fail(ErrorKind::contract, "duplicate subsample member '" + id + "'");
  }
}

SubsampleHandle SubsampleHandle::whole(const DesignView& parent) {
  std::vector<std::string> ids;
  ids.reserve(parent.size());
  for (const auto& r : parent.rows()) ids.push_back(r.id);
  return SubsampleHandle(parent, std::move(ids), Provenance{"full sample", {}, {}});
}

// ------------------------------------------------------------- EmpiricalCond

EmpiricalCond::EmpiricalCond(int arm, std::vector<MassPoint> raw) : arm_(arm) {
  if (arm != 0 && arm != 1) fail(ErrorKind::contract, "arm must be 0 or 1");
  if (raw.empty()) fail(ErrorKind::validation, "empty arm " + std::to_string(arm));
  const std::size_t dim = raw.front().location.size();
  double total = 0.0;
  for (const auto& pt : raw) {
    if (pt.location.size() != dim) fail(ErrorKind::contract, "mixed location dimensions");
    if (!(pt.mass >= 0.0) || !std::isfinite(pt.mass)) fail(ErrorKind::validation, "masses must be non-negative");
    total += pt.mass;
  }
  if (!(total > 0.0)) fail(ErrorKind::validation, "empty arm " + std::to_string(arm) + " (zero total mass)");
  std::sort(raw.begin(), raw.end(),
            [](const MassPoint& a, const MassPoint& b) { return location_less(a.location, b.location); });
  for (auto& pt : raw) {
    if (pt.mass == 0.0) continue;
    if (!points_.empty() && points_.back().location == pt.location) {
      points_.back().mass += pt.mass;
    } else {
      points_.push_back(std::move(pt));
    }
  }
  for (auto& pt : points_) pt.mass /= total;
}

double EmpiricalCond::mass_at(std::span<const double> location) const {
  auto it = std::lower_bound(points_.begin(), points_.end(), location,
                             [](const MassPoint& p, std::span<const double> loc) { return location_less(p.location, loc); });
  if (it != points_.end() && std::equal(it->location.begin(), it->location.end(), location.begin(), location.end()))
    return it->mass;
  return 0.0;
}

std::vector<double> EmpiricalCond::scalar_locations() const {
  if (!is_scalar()) fail(ErrorKind::domain, "distribution has vector locations; reduce to a scalar index first");
  std::vector<double> out;
  out.reserve(points_.size());
  for (const auto& pt : points_) out.push_back(pt.location.front());
  return out;
}

double EmpiricalCond::total_mass() const {
  return std::accumulate(points_.begin(), points_.end(), 0.0,
                         [](double acc, const MassPoint& p) { return acc + p.mass; });
}

EmpiricalCond empirical_cond(const DesignView& view, int arm) {
  std::vector<MassPoint> raw;
  for (const auto& r : view.rows())
    if (r.d == arm) raw.push_back({r.x, 1.0});
  if (raw.empty()) fail(ErrorKind::validation, "empty arm " + std::to_string(arm));
  const double w = 1.0 / static_cast<double>(raw.size());
  for (auto& pt : raw) pt.mass = w;
  return EmpiricalCond(arm, std::move(raw));
}

EmpiricalCond empirical_cond(const Sample& sample, int arm) { return empirical_cond(sample.design_view(), arm); }

}  // namespace bb
