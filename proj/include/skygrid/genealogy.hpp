#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skygrid/errors.hpp"

namespace skygrid {

/// Raised for malformed Newick text or tip dates that contradict branch lengths.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

/// One node of a rooted binary genealogy. Times run backward (larger = older).
struct TreeNode {
  std::string label;
  double time = 0.0;
  int parent = -1;
  int left = -1;
  int right = -1;

  bool is_tip() const { return left < 0; }
};

/// A rooted, dated, strictly binary genealogy for a single locus.
///
/// Construction validates the invariants: n tips and n-1 internal nodes, every
/// internal node strictly older than both children, and the youngest node a tip.
class Genealogy {
 public:
  Genealogy(std::vector<TreeNode> nodes, int root, std::string locus = {});

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }
  int root() const { return root_; }
  const std::string& locus() const { return locus_; }

  std::size_t tip_count() const { return tip_count_; }
  double root_time() const { return nodes_[static_cast<std::size_t>(root_)].time; }

  /// Tip sampling times, in node order.
  std::vector<double> tip_times() const;
  /// Internal node times, sorted ascending.
  std::vector<double> coalescent_times() const;

 private:
  std::vector<TreeNode> nodes_;
  int root_;
  std::string locus_;
  std::size_t tip_count_ = 0;
};

enum class DateConvention {
  kBackward,  ///< dates are time units before the reference point t = 0
  kCalendar,  ///< dates are forward (e.g. decimal years); t = anchor - date
};

/// How tip sampling times are recovered while parsing.
///
/// Dates come from `table` (tip label -> date), or from a label suffix after
/// `label_delimiter` (e.g. "A|2001.5"). With neither, tip times are read off
/// the branch lengths with the tip furthest from the root placed at t = 0.
struct TipDateOptions {
  DateConvention convention = DateConvention::kBackward;
  std::optional<char> label_delimiter;
  std::map<std::string, double> table;
  /// Calendar anchor (the most recent date). Defaults to the tree's max date.
  std::optional<double> anchor;
  /// Allowed disagreement between declared dates and branch-length heights.
  double tolerance = 1e-8;
};

Genealogy parse_genealogy(std::string_view newick, const TipDateOptions& dates = {},
                          std::string locus = {});

/// Parses every ';'-terminated tree in `text`; loci are labelled `<prefix><index>`.
std::vector<Genealogy> parse_genealogies(std::string_view text, const TipDateOptions& dates = {},
                                         const std::string& locus_prefix = "locus");

/// Reads a two-column `tip_id<TAB>date` table. Blank lines and '#' comments are skipped.
std::map<std::string, double> read_tip_date_table(const std::string& path);

/// Collects all raw dates that `parse_genealogy` would assign, without
/// building trees. Used to find a shared calendar anchor across loci.
std::vector<double> declared_tip_dates(std::string_view text, const TipDateOptions& dates);

/// Writes the genealogy as Newick with shortest round-trip branch lengths.
std::string emit_newick(const Genealogy& tree);

enum class EventKind { kSampling, kCoalescent };

struct TimelineEvent {
  double time = 0.0;
  EventKind kind = EventKind::kSampling;
  /// Tips added (sampling) or 1 (coalescent).
  int multiplicity = 1;
  int lineages_after = 0;
};

/// Sorted sampling/coalescent events with running lineage counts.
class EventTimeline {
 public:
  explicit EventTimeline(std::vector<TimelineEvent> events);

  const std::vector<TimelineEvent>& events() const { return events_; }
  std::size_t coalescent_count() const;
  double first_time() const { return events_.front().time; }
  double last_time() const { return events_.back().time; }

  /// Number of lineages on [t, next event); 0 before the first sample.
  int lineages_at(double t) const;

 private:
  std::vector<TimelineEvent> events_;
};

EventTimeline event_timeline(const Genealogy& tree);

}  // namespace skygrid
