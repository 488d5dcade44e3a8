#ifndef CURVE_EQUIV_DATA_HPP
#define CURVE_EQUIV_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "curve_equiv/errors.hpp"
#include "curve_equiv/models.hpp"
#include "curve_equiv/rng.hpp"

namespace curve_equiv {

/// One group's dose-response data: k distinct doses, n_i responses at dose i.
class GroupSample {
 public:
  GroupSample() = default;

  GroupSample(std::vector<double> doses, std::vector<std::vector<double>> responses, Interval region)
      : doses_(std::move(doses)), responses_(std::move(responses)), region_(region) {
    if (doses_.empty()) throw Error(ErrorKind::EmptyGroup, "group has no dose levels");
    if (doses_.size() != responses_.size()) {
      throw Error(ErrorKind::DimensionMismatch, "doses and response lists differ in length");
    }
    if (!(region_.lo <= region_.hi)) throw Error(ErrorKind::InvalidArgument, "region must satisfy lo <= hi");
    for (std::size_t i = 0; i < doses_.size(); ++i) {
      if (!std::isfinite(doses_[i])) throw Error(ErrorKind::InvalidArgument, "dose is not finite");
      if (i > 0 && !(doses_[i] > doses_[i - 1])) {
        throw Error(ErrorKind::InvalidArgument, "doses must be strictly increasing");
      }
      if (!region_.contains(doses_[i])) {
        throw Error(ErrorKind::InvalidArgument, "dose " + std::to_string(doses_[i]) + " outside region");
      }
      if (responses_[i].empty()) throw Error(ErrorKind::EmptyGroup, "dose level without responses");
      n_ += responses_[i].size();
    }
  }

  const std::vector<double>& doses() const { return doses_; }
  const std::vector<std::vector<double>>& responses() const { return responses_; }
  const Interval& region() const { return region_; }
  std::size_t k() const { return doses_.size(); }
  std::size_t n() const { return n_; }
  std::size_t count(std::size_t i) const { return responses_[i].size(); }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c;
    c.reserve(k());
    for (const auto& r : responses_) c.push_back(r.size());
    return c;
  }

  GroupSample with_region(Interval region) const { return GroupSample(doses_, responses_, region); }

  bool operator==(const GroupSample&) const = default;

 private:
  std::vector<double> doses_;
  std::vector<std::vector<double>> responses_;
  Interval region_{};
  std::size_t n_ = 0;
};

/// zeta_i = n_i / n for each dose level.
inline std::vector<double> design_weights(const GroupSample& s) {
  std::vector<double> w;
  w.reserve(s.k());
  const double n = static_cast<double>(s.n());
  for (std::size_t i = 0; i < s.k(); ++i) w.push_back(static_cast<double>(s.count(i)) / n);
  return w;
}

struct SamplePair {
  GroupSample group1;
  GroupSample group2;
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_double(const std::string& field, std::size_t line, const char* what) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": invalid " + what + " '" + field + "'");
  }
  return v;
}

inline GroupSample build_group(const std::map<double, std::vector<double>>& by_dose, Interval region) {
  std::vector<double> doses;
  std::vector<std::vector<double>> responses;
  for (const auto& [dose, ys] : by_dose) {
    doses.push_back(dose);
    responses.push_back(ys);
  }
  return GroupSample(std::move(doses), std::move(responses), region);
}

}  // namespace detail

/// Reads `group,dose,response` CSV.  Rows keep file order within a dose.
inline SamplePair parse_samples_csv(std::istream& in, std::optional<Interval> region_override = std::nullopt) {
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::map<double, std::vector<double>> groups[2];
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -std::numeric_limits<double>::infinity();

  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    line = detail::trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      std::string h;
      for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) h.push_back(c);
      }
      if (h != "group,dose,response") {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected header 'group,dose,response'");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(detail::trim(f));
    if (fields.size() != 3) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected 3 fields");
    }
    int group = 0;
    if (fields[0] == "1") {
      group = 1;
    } else if (fields[0] == "2") {
      group = 2;
    } else {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": group must be 1 or 2, got '" + fields[0] + "'");
    }
    const double dose = detail::parse_double(fields[1], lineno, "dose");
    const double y = detail::parse_double(fields[2], lineno, "response");
    groups[group - 1][dose].push_back(y);
    dmin = std::min(dmin, dose);
    dmax = std::max(dmax, dose);
  }
  if (!header_seen) throw Error(ErrorKind::ParseError, "empty file: missing header");
  if (groups[0].empty()) throw Error(ErrorKind::EmptyGroup, "group 1 has no rows");
  if (groups[1].empty()) throw Error(ErrorKind::EmptyGroup, "group 2 has no rows");

  const Interval region = region_override.value_or(Interval{dmin, dmax});
  return {detail::build_group(groups[0], region), detail::build_group(groups[1], region)};
}

inline SamplePair load_samples_csv(const std::string& path, std::optional<Interval> region_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IOError, "cannot open '" + path + "'");
  return parse_samples_csv(in, region_override);
}

/// Inverse of parse_samples_csv; values written with round-trip precision.
inline void write_samples_csv(std::ostream& out, const SamplePair& pair) {
  out << "group,dose,response\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const GroupSample* gs[2] = {&pair.group1, &pair.group2};
  for (int g = 0; g < 2; ++g) {
    for (std::size_t i = 0; i < gs[g]->k(); ++i) {
      for (double y : gs[g]->responses()[i]) out << (g + 1) << ',' << gs[g]->doses()[i] << ',' << y << '\n';
    }
  }
}

inline void save_samples_csv(const std::string& path, const SamplePair& pair) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IOError, "cannot write '" + path + "'");
  write_samples_csv(out, pair);
}

/// Y_ij = m(x_i, b) + N(0, sigma2) drawn in dose-major order from `stream`.
inline GroupSample simulate_sample(const ModelSpec& spec, const Vector& b, const std::vector<double>& doses,
                                   const std::vector<std::size_t>& counts, double sigma2, RngStream& stream,
                                   std::optional<Interval> region = std::nullopt) {
  if (doses.size() != counts.size()) throw Error(ErrorKind::DimensionMismatch, "doses and counts differ in length");
  if (!(sigma2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma2 must be non-negative");
  const double sd = std::sqrt(sigma2);
  std::vector<std::vector<double>> responses(doses.size());
  for (std::size_t i = 0; i < doses.size(); ++i) {
    if (counts[i] == 0) throw Error(ErrorKind::InvalidArgument, "counts must be positive");
    const double mean = eval_model(spec, doses[i], b);
    responses[i].reserve(counts[i]);
    for (std::size_t j = 0; j < counts[i]; ++j) responses[i].push_back(stream.normal(mean, sd));
  }
  const Interval r = region.value_or(Interval{*std::min_element(doses.begin(), doses.end()),
                                              *std::max_element(doses.begin(), doses.end())});
  return GroupSample(doses, std::move(responses), r);
}

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_DATA_HPP
