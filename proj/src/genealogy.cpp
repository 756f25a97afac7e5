#include "skygrid/genealogy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include "skygrid/io_util.hpp"

namespace skygrid {

Genealogy::Genealogy(std::vector<TreeNode> nodes, int root, std::string locus)
    : nodes_(std::move(nodes)), root_(root), locus_(std::move(locus)) {
  const auto n = static_cast<int>(nodes_.size());
  if (root_ < 0 || root_ >= n) throw DataError("genealogy: root index out of range");
  if (nodes_[static_cast<std::size_t>(root_)].parent != -1) {
    throw DataError("genealogy: root has a parent");
  }
  std::size_t internal = 0;
  for (int i = 0; i < n; ++i) {
    const auto& nd = nodes_[static_cast<std::size_t>(i)];
    if (!std::isfinite(nd.time)) throw DataError("genealogy: non-finite node time");
    if (nd.is_tip()) {
      if (nd.right >= 0) throw DataError("genealogy: node with a single child");
      if (nd.time < 0.0) throw DataError("genealogy: tip '" + nd.label + "' has negative sampling time");
      ++tip_count_;
      continue;
    }
    if (nd.right < 0) throw DataError("genealogy: node with a single child");
    ++internal;
    for (int child : {nd.left, nd.right}) {
      if (child < 0 || child >= n) throw DataError("genealogy: child index out of range");
      const auto& c = nodes_[static_cast<std::size_t>(child)];
      if (c.parent != i) throw DataError("genealogy: inconsistent parent link");
      if (!(nd.time > c.time)) {
        throw DataError("genealogy: internal node is not strictly older than its children");
      }
    }
  }
  if (tip_count_ < 2) throw DataError("genealogy: at least two tips are required");
  if (internal != tip_count_ - 1) throw DataError("genealogy: expected n-1 internal nodes");
}

std::vector<double> Genealogy::tip_times() const {
  std::vector<double> out;
  out.reserve(tip_count_);
  for (const auto& nd : nodes_) {
    if (nd.is_tip()) out.push_back(nd.time);
  }
  return out;
}

std::vector<double> Genealogy::coalescent_times() const {
  std::vector<double> out;
  out.reserve(tip_count_ - 1);
  for (const auto& nd : nodes_) {
    if (!nd.is_tip()) out.push_back(nd.time);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct RawNode {
  std::string label;
  std::optional<double> length;
  std::vector<std::unique_ptr<RawNode>> children;
};

class NewickReader {
 public:
  explicit NewickReader(std::string_view text) : text_(text) {}

  bool at_end() {
    skip_ignorable();
    return pos_ >= text_.size();
  }

  std::unique_ptr<RawNode> read_tree() {
    auto root = read_subtree();
    skip_ignorable();
    if (peek() != ';') fail("expected ';' at end of tree");
    ++pos_;
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("newick: " + what + " at offset " + std::to_string(pos_));
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ignorable() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '[') {
        const auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) fail("unterminated comment");
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  std::unique_ptr<RawNode> read_subtree() {
    auto node = std::make_unique<RawNode>();
    skip_ignorable();
    if (peek() == '(') {
      ++pos_;
      while (true) {
        node->children.push_back(read_subtree());
        skip_ignorable();
        const char c = peek();
        ++pos_;
        if (c == ',') continue;
        if (c == ')') break;
        --pos_;
        fail("expected ',' or ')'");
      }
    }
    skip_ignorable();
    node->label = read_label();
    skip_ignorable();
    if (peek() == ':') {
      ++pos_;
      skip_ignorable();
      node->length = read_number();
    }
    if (node->children.empty() && node->label.empty()) fail("unnamed tip");
    return node;
  }

  std::string read_label() {
    std::string out;
    if (peek() == '\'') {
      ++pos_;
      while (true) {
        if (pos_ >= text_.size()) fail("unterminated quoted label");
        const char c = text_[pos_++];
        if (c == '\'') {
          if (peek() == '\'') {
            out.push_back('\'');
            ++pos_;
            continue;
          }
          break;
        }
        out.push_back(c);
      }
      return out;
    }
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' ||
          std::isspace(static_cast<unsigned char>(c))) {
        break;
      }
      out.push_back(c);
      ++pos_;
    }
    return out;
  }

  double read_number() {
    std::size_t end = pos_;
    while (end < text_.size()) {
      const char c = text_[end];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
          c == 'e' || c == 'E') {
        ++end;
      } else {
        break;
      }
    }
    const auto token = text_.substr(pos_, end - pos_);
    const auto value = parse_double(token);
    if (!value) fail("invalid branch length '" + std::string(token) + "'");
    pos_ = end;
    return *value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Splits "name<delim>date" and returns the parsed date.
std::optional<double> label_date(const std::string& label, char delim) {
  const auto at = label.rfind(delim);
  if (at == std::string::npos) return std::nullopt;
  return parse_double(std::string_view(label).substr(at + 1));
}

std::optional<double> raw_tip_date(const std::string& label, const TipDateOptions& dates) {
  if (!dates.table.empty()) {
    const auto it = dates.table.find(label);
    if (it == dates.table.end()) throw ParseError("tip '" + label + "' has no entry in the date table");
    return it->second;
  }
  if (dates.label_delimiter) {
    const auto d = label_date(label, *dates.label_delimiter);
    if (!d) throw ParseError("tip '" + label + "' has no date suffix");
    return d;
  }
  return std::nullopt;
}

void collect_tip_labels(const RawNode& node, std::vector<std::string>& out) {
  if (node.children.empty()) {
    out.push_back(node.label);
    return;
  }
  for (const auto& c : node.children) collect_tip_labels(*c, out);
}

Genealogy build_genealogy(const RawNode& raw_root, const TipDateOptions& dates, std::string locus) {
  std::vector<TreeNode> nodes;
  std::vector<double> depth;  // root-to-node path length

  std::function<int(const RawNode&, int, double)> visit = [&](const RawNode& raw, int parent,
                                                             double d) -> int {
    if (!raw.children.empty() && raw.children.size() != 2) {
      throw ParseError("newick: node with " + std::to_string(raw.children.size()) +
                       " children; only binary trees are supported");
    }
    if (parent >= 0) {
      if (!raw.length) throw ParseError("newick: missing branch length below an internal node");
      if (*raw.length < 0.0) throw ParseError("newick: negative branch length");
      d += *raw.length;
    }
    const int index = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{raw.label, 0.0, parent, -1, -1});
    depth.push_back(d);
    if (!raw.children.empty()) {
      const int l = visit(*raw.children[0], index, d);
      const int r = visit(*raw.children[1], index, d);
      nodes[static_cast<std::size_t>(index)].left = l;
      nodes[static_cast<std::size_t>(index)].right = r;
    }
    return index;
  };
  visit(raw_root, -1, 0.0);

  // Tip times in backward time, when declared.
  std::vector<std::optional<double>> declared(nodes.size());
  std::optional<double> max_date;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].is_tip()) continue;
    declared[i] = raw_tip_date(nodes[i].label, dates);
    if (declared[i]) max_date = max_date ? std::max(*max_date, *declared[i]) : *declared[i];
  }

  double root_time = 0.0;
  if (max_date) {
    const double anchor = dates.anchor.value_or(*max_date);
    std::optional<std::size_t> youngest;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!declared[i]) continue;
      if (dates.convention == DateConvention::kCalendar) declared[i] = anchor - *declared[i];
      if (!youngest || *declared[i] < *declared[*youngest]) youngest = i;
    }
    root_time = *declared[*youngest] + depth[*youngest];
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!declared[i]) continue;
      const double recovered = root_time - depth[i];
      if (std::abs(recovered - *declared[i]) > dates.tolerance) {
        std::ostringstream msg;
        msg << "tip '" << nodes[i].label << "' declared at time " << *declared[i]
            << " but branch lengths place it at " << recovered;
        throw ParseError(msg.str());
      }
    }
  } else {
    root_time = *std::max_element(depth.begin(), depth.end());
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].time = declared[i] ? *declared[i] : root_time - depth[i];
  }
  return Genealogy(std::move(nodes), 0, std::move(locus));
}

}  // namespace

Genealogy parse_genealogy(std::string_view newick, const TipDateOptions& dates, std::string locus) {
  NewickReader reader(newick);
  auto raw = reader.read_tree();
  if (!reader.at_end()) throw ParseError("newick: trailing text after ';'");
  return build_genealogy(*raw, dates, std::move(locus));
}

std::vector<Genealogy> parse_genealogies(std::string_view text, const TipDateOptions& dates,
                                         const std::string& locus_prefix) {
  NewickReader reader(text);
  std::vector<Genealogy> out;
  while (!reader.at_end()) {
    auto raw = reader.read_tree();
    out.push_back(build_genealogy(*raw, dates, locus_prefix + std::to_string(out.size() + 1)));
  }
  if (out.empty()) throw ParseError("newick: no trees found");
  return out;
}

std::vector<double> declared_tip_dates(std::string_view text, const TipDateOptions& dates) {
  NewickReader reader(text);
  std::vector<double> out;
  while (!reader.at_end()) {
    auto raw = reader.read_tree();
    std::vector<std::string> labels;
    collect_tip_labels(*raw, labels);
    for (const auto& l : labels) {
      if (auto d = raw_tip_date(l, dates)) out.push_back(*d);
    }
  }
  return out;
}

std::map<std::string, double> read_tip_date_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tip-date table '" + path + "'");
  std::map<std::string, double> table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto fields = split(trimmed, '\t');
    const auto value = fields.size() == 2 ? parse_double(trim(fields[1])) : std::nullopt;
    if (!value) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 'tip_id<TAB>date'");
    }
    if (!table.emplace(std::string(trim(fields[0])), *value).second) {
      throw DataError(path + ":" + std::to_string(line_no) + ": duplicate tip id");
    }
  }
  return table;
}

namespace {

std::string newick_label(const std::string& label) {
  const bool plain = std::none_of(label.begin(), label.end(), [](char c) {
    return c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ']' ||
           c == '\'' || std::isspace(static_cast<unsigned char>(c));
  });
  if (plain) return label;
  std::string out = "'";
  for (char c : label) {
    out.push_back(c);
    if (c == '\'') out.push_back('\'');
  }
  out.push_back('\'');
  return out;
}

}  // namespace

std::string emit_newick(const Genealogy& tree) {
  std::string out;
  std::function<void(int)> write = [&](int index) {
    const auto& nd = tree.node(index);
    if (!nd.is_tip()) {
      out.push_back('(');
      write(nd.left);
      out.push_back(',');
      write(nd.right);
      out.push_back(')');
    }
    out += newick_label(nd.label);
    if (nd.parent >= 0) {
      out.push_back(':');
      out += format_double(tree.node(nd.parent).time - nd.time);
    }
  };
  write(tree.root());
  out.push_back(';');
  return out;
}

EventTimeline::EventTimeline(std::vector<TimelineEvent> events) : events_(std::move(events)) {
  if (events_.empty()) throw DataError("timeline: no events");
  int lineages = 0;
  double previous = -std::numeric_limits<double>::infinity();
  for (const auto& e : events_) {
    if (e.time < previous) throw DataError("timeline: events out of order");
    previous = e.time;
    if (e.kind == EventKind::kSampling) {
      lineages += e.multiplicity;
    } else {
      if (lineages < 2) throw DataError("timeline: coalescence with fewer than two lineages");
      lineages -= 1;
    }
    if (e.lineages_after != lineages) throw DataError("timeline: inconsistent lineage count");
  }
  if (lineages != 1) throw DataError("timeline: final lineage count is not 1");
}

std::size_t EventTimeline::coalescent_count() const {
  return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(), [](const auto& e) {
    return e.kind == EventKind::kCoalescent;
  }));
}

int EventTimeline::lineages_at(double t) const {
  int lineages = 0;
  for (const auto& e : events_) {
    if (e.time > t) break;
    lineages = e.lineages_after;
  }
  return lineages;
}

EventTimeline event_timeline(const Genealogy& tree) {
  auto samples = tree.tip_times();
  std::sort(samples.begin(), samples.end());
  const auto coalescents = tree.coalescent_times();
  for (std::size_t i = 1; i < coalescents.size(); ++i) {
    if (coalescents[i] == coalescents[i - 1]) {
      throw DataError("timeline: simultaneous coalescent events at time " +
                      format_double(coalescents[i]));
    }
  }

  std::vector<TimelineEvent> events;
  events.reserve(samples.size() + coalescents.size());
  std::size_t si = 0;
  std::size_t ci = 0;
  int lineages = 0;
  while (si < samples.size() || ci < coalescents.size()) {
    // Sampling sorts before coalescence at equal times.
    if (si < samples.size() && (ci >= coalescents.size() || samples[si] <= coalescents[ci])) {
      const double t = samples[si];
      int count = 0;
      while (si < samples.size() && samples[si] == t) {
        ++count;
        ++si;
      }
      lineages += count;
      events.push_back({t, EventKind::kSampling, count, lineages});
    } else {
      lineages -= 1;
      events.push_back({coalescents[ci++], EventKind::kCoalescent, 1, lineages});
    }
  }
  return EventTimeline(std::move(events));
}

}  // namespace skygrid
