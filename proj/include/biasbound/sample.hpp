#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bb {

/// One observation (y, x, d). `y` is empty for design-only data.
struct Unit {
  std::string id;
  std::optional<double> y;
  std::vector<double> x;
  int d = 0;
};

/// Column map for `Sample::load_csv`. When `x_columns` is empty every column
/// named `x<k>` is used, ordered by k.
struct CsvSchema {
  std::string id_column = "id";
  std::string y_column = "y";
  std::string d_column = "d";
  std::vector<std::string> x_columns;
  bool design_only = false;
};

class SubsampleHandle;

/// Outcome-free view of a sample. Everything that builds a subsample takes one
/// of these, so subsample construction cannot depend on y.
class DesignView {
 public:
  struct Row {
    std::string id;
    std::vector<double> x;
    int d = 0;
  };

  explicit DesignView(std::vector<Row> rows);

  const std::vector<Row>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t p() const noexcept { return p_; }
  std::size_t count(int arm) const;
  bool contains(const std::string& id) const { return position_.count(id) > 0; }
  const Row& at(const std::string& id) const;

  /// Restriction to the members of `sub`, in handle order.
  DesignView restrict(const SubsampleHandle& sub) const;

 private:
  std::vector<Row> rows_;
  std::size_t p_ = 0;
  std::unordered_map<std::string, std::size_t> position_;
};

/// Immutable collection of units with a fixed covariate dimension.
class Sample {
 public:
  explicit Sample(std::vector<Unit> units, bool design_only = false);

  static Sample load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
  static Sample parse_csv(const std::string& text, const CsvSchema& schema = {});

  const std::vector<Unit>& units() const noexcept { return units_; }
  const Unit& unit(std::size_t i) const { return units_.at(i); }
  std::size_t size() const noexcept { return units_.size(); }
  std::size_t p() const noexcept { return p_; }
  std::size_t count(int arm) const;
  bool design_only() const noexcept { return design_only_; }

  /// Throws unless every unit has an outcome and both arms are populated.
  void require_outcomes(const std::string& module) const;

  std::optional<std::size_t> find(const std::string& id) const;

  DesignView design_view() const;

  /// Units of `sub` in handle order; ids must belong to this sample.
  Sample subset(const SubsampleHandle& sub) const;

  /// Same units with outcomes replaced; used to check that design-phase output
  /// does not move when y does.
  Sample with_outcomes(std::span<const double> y) const;

 private:
  std::vector<Unit> units_;
  std::size_t p_ = 0;
  bool design_only_ = false;
  std::unordered_map<std::string, std::size_t> position_;
};

struct MatchedPair {
  std::string treated_id;
  std::string control_id;
  double distance = 0.0;
};

/// Free-form record of how a subsample was built.
struct Provenance {
  std::string rule;
  std::vector<MatchedPair> pairs;
  std::vector<std::string> notes;
};

/// A subset of a parent sample identified by unit ids.
class SubsampleHandle {
 public:
  SubsampleHandle(const DesignView& parent, std::vector<std::string> member_ids,
                  Provenance provenance);

  /// Every unit of `parent`.
  static SubsampleHandle whole(const DesignView& parent);

  const std::vector<std::string>& member_ids() const noexcept { return member_ids_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return member_ids_.size(); }

 private:
  std::vector<std::string> member_ids_;
  Provenance provenance_;
};

struct MassPoint {
  std::vector<double> location;
  double mass = 0.0;
};

/// Finitely supported distribution of covariates (or an index) within one arm.
/// Points are sorted lexicographically; bitwise-equal locations are merged.
class EmpiricalCond {
 public:
  EmpiricalCond(int arm, std::vector<MassPoint> raw);

  int arm() const noexcept { return arm_; }
  const std::vector<MassPoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t dim() const noexcept { return points_.front().location.size(); }
  bool is_scalar() const noexcept { return dim() == 1; }

  /// Mass at `location`, zero when it is not a support point.
  double mass_at(std::span<const double> location) const;
  std::vector<double> scalar_locations() const;
  double total_mass() const;

 private:
  int arm_;
  std::vector<MassPoint> points_;
};

/// Equal masses 1/|arm| on the arm's covariate vectors.
EmpiricalCond empirical_cond(const DesignView& view, int arm);
EmpiricalCond empirical_cond(const Sample& sample, int arm);

/// Lexicographic order on locations; the ordering used inside EmpiricalCond.
bool location_less(std::span<const double> a, std::span<const double> b);

/// Orders ids with embedded numbers numerically ("T2" < "T10").
bool natural_id_less(const std::string& a, const std::string& b);

}  // namespace bb
