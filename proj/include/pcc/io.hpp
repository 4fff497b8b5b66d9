#ifndef PCC_IO_HPP
#define PCC_IO_HPP

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/evaluation.hpp"
#include "pcc/inference.hpp"
#include "pcc/movement_model.hpp"

namespace pcc {

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_unsigned(std::string_view s, std::uint64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Telemetry

struct TelemetryOptions {
  double gap_factor = 10.0;   // gap: interval longer than this multiple of the median interval
};

/// Reads `id,time,x,y` CSV (columns in any order, extra columns ignored).
/// Individuals are indexed by first appearance, each track is sorted by
/// time, and times are mapped affinely onto [0, 1].
inline Telemetry parse_telemetry(std::istream& in, const TelemetryOptions& options = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    for (auto f : detail::split(line)) header.emplace_back(f);
  }
  if (header.empty()) throw ParseError("empty telemetry file", line_no == 0 ? 1 : line_no);
  const std::size_t header_line = line_no;
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) column.emplace(header[c], c);
  std::size_t idx[4];
  const char* names[4] = {"id", "time", "x", "y"};
  for (int k = 0; k < 4; ++k) {
    auto it = column.find(names[k]);
    if (it == column.end()) throw ParseError(std::string("missing column '") + names[k] + "'", header_line);
    idx[k] = it->second;
  }

  struct Row {
    double t, x, y;
    std::size_t line;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    const std::string id(fields[idx[0]]);
    if (id.empty()) throw ParseError("empty id", line_no);
    Row r{0.0, 0.0, 0.0, line_no};
    double* targets[3] = {&r.t, &r.x, &r.y};
    for (int k = 1; k < 4; ++k)
      if (!detail::parse_double(fields[idx[k]], *targets[k - 1]))
        throw ParseError(std::string("non-numeric ") + names[k] + " '" + std::string(fields[idx[k]]) + "'", line_no);
    if (!rows.count(id)) order.push_back(id);
    rows[id].push_back(r);
  }
  if (order.empty()) throw ParseError("no observations", line_no);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& id : order) {
    const auto& rs = rows[id];
    if (rs.size() < 2) throw ParseError("individual '" + id + "' has a single observation", rs.front().line);
    for (const Row& r : rs) {
      lo = std::min(lo, r.t);
      hi = std::max(hi, r.t);
    }
  }
  if (!(hi > lo)) throw ParseError("all observations share one time", line_no);

  Telemetry data;
  data.time_map = TimeMap{lo, hi - lo};
  for (const auto& id : order) {
    auto rs = rows[id];
    std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    Track tr;
    tr.id = id;
    for (const Row& r : rs) {
      tr.raw_time.push_back(r.t);
      tr.time.push_back(std::clamp(data.time_map.to_internal(r.t), 0.0, 1.0));
      tr.x.push_back(r.x);
      tr.y.push_back(r.y);
    }
    data.tracks.push_back(std::move(tr));
  }

  std::vector<double> intervals;
  for (const auto& tr : data.tracks)
    for (std::size_t k = 1; k < tr.size(); ++k)
      if (tr.time[k] > tr.time[k - 1]) intervals.push_back(tr.time[k] - tr.time[k - 1]);
  if (!intervals.empty()) {
    const double threshold = options.gap_factor * quantile(intervals, 0.5);
    for (std::size_t i = 0; i < data.tracks.size(); ++i) {
      const auto& tr = data.tracks[i];
      for (std::size_t k = 1; k < tr.size(); ++k)
        if (tr.time[k] - tr.time[k - 1] > threshold) data.gaps.push_back({i, tr.time[k - 1], tr.time[k]});
    }
  }
  return data;
}

inline Telemetry load_telemetry(const std::string& path, const TelemetryOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open telemetry file '" + path + "'");
  return parse_telemetry(in, options);
}

/// Writes raw (user-unit) times so that re-import reproduces the telemetry exactly.
inline void write_telemetry(std::ostream& out, const Telemetry& data) {
  out << "id,time,x,y\n";
  for (const auto& tr : data.tracks)
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double raw = k < tr.raw_time.size() ? tr.raw_time[k] : data.time_map.to_external(tr.time[k]);
      out << tr.id << ',' << format_double(raw) << ',' << format_double(tr.x[k]) << ',' << format_double(tr.y[k])
          << '\n';
    }
}

/// Human-readable ingestion report: counts per individual and detected gaps in user units.
inline std::string ingestion_summary(const Telemetry& data) {
  std::ostringstream s;
  s << data.individuals() << " individuals, " << data.total() << " observations, time span ["
    << data.time_map.to_external(0.0) << ", " << data.time_map.to_external(1.0) << "]\n";
  for (std::size_t i = 0; i < data.tracks.size(); ++i) {
    std::size_t gaps = 0;
    for (const auto& g : data.gaps) gaps += g.individual == i;
    s << "  " << data.tracks[i].id << ": " << data.tracks[i].size() << " observations, " << gaps << " gaps\n";
  }
  for (const auto& g : data.gaps)
    s << "  gap for " << data.tracks[g.individual].id << ": " << data.time_map.to_external(g.from) << " to "
      << data.time_map.to_external(g.to) << '\n';
  return s.str();
}

// ---------------------------------------------------------------------------
// Chains and arrays

inline void write_chain_csv(std::ostream& out, const PosteriorChain& chain) {
  out << "iteration,phi_inl,sigma_s2,ratio,sigma_mu2,sigma0_sq,sigma_w2,phi_w,log_likelihood\n";
  for (std::size_t k = 0; k < chain.records.size(); ++k) {
    const auto& r = chain.records[k];
    const std::size_t iteration = chain.config.burn_in + (k + 1) * chain.config.thin - 1;
    out << iteration << ',' << format_double(r.params.phi_inl) << ',' << format_double(r.params.sigma_s2) << ','
        << format_double(r.params.ratio) << ',' << format_double(r.params.sigma_mu2()) << ','
        << format_double(r.params.sigma0_sq) << ',' << format_double(r.params.sigma_w2) << ','
        << format_double(r.params.phi_w) << ',' << format_double(r.log_likelihood) << '\n';
  }
}

/// Scalar parameters and log-likelihoods; latent paths live in the array file.
inline std::vector<ChainRecord> read_chain_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty chain file", 1);
  const auto header = detail::split(line);
  const std::vector<std::string_view> expected{"iteration", "phi_inl", "sigma_s2", "ratio", "sigma_mu2",
                                               "sigma0_sq", "sigma_w2", "phi_w", "log_likelihood"};
  if (header != expected) throw ParseError("unexpected chain header", 1);
  std::vector<ChainRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != expected.size()) throw ParseError("wrong field count", line_no);
    double v[9];
    for (std::size_t c = 0; c < 9; ++c)
      if (!detail::parse_double(f[c], v[c])) throw ParseError("non-numeric field '" + std::string(f[c]) + "'", line_no);
    ChainRecord r;
    r.params.phi_inl = v[1];
    r.params.sigma_s2 = v[2];
    r.params.ratio = v[3];
    r.params.sigma0_sq = v[5];
    r.params.sigma_w2 = v[6];
    r.params.phi_w = v[7];
    r.log_likelihood = v[8];
    out.push_back(std::move(r));
  }
  return out;
}

/// Array file layout: "PCCA", uint32 version (1), then uint64 p, m, d,
/// followed by little-endian float64 values until end of file. Values come in
/// records of p matrices (one per individual), each m x d and row-major.
inline constexpr char kArrayMagic[4] = {'P', 'C', 'C', 'A'};
inline constexpr std::uint32_t kArrayVersion = 1;

/// Matrices grouped `group` at a time (one group per record or draw).
struct ArrayBundle {
  std::uint64_t group = 1;
  std::vector<Eigen::MatrixXd> arrays;

  std::size_t records() const { return group ? arrays.size() / group : 0; }
  const Eigen::MatrixXd& at(std::size_t record, std::size_t member) const { return arrays.at(record * group + member); }
};

namespace detail {

inline void check_bundle(const ArrayBundle& b) {
  if (b.group == 0) throw std::invalid_argument("array bundle: group size must be positive");
  if (b.arrays.size() % b.group != 0) throw std::invalid_argument("array bundle: count is not a multiple of the group");
  for (const auto& a : b.arrays)
    if (a.rows() != b.arrays.front().rows() || a.cols() != b.arrays.front().cols())
      throw std::invalid_argument("array bundle: ragged arrays");
}

}  // namespace detail

inline void write_array_binary(std::ostream& out, const ArrayBundle& bundle) {
  static_assert(std::endian::native == std::endian::little, "array format assumes a little-endian host");
  detail::check_bundle(bundle);
  const std::uint64_t m = bundle.arrays.empty() ? 0 : static_cast<std::uint64_t>(bundle.arrays.front().rows());
  const std::uint64_t d = bundle.arrays.empty() ? 0 : static_cast<std::uint64_t>(bundle.arrays.front().cols());
  out.write(kArrayMagic, 4);
  out.write(reinterpret_cast<const char*>(&kArrayVersion), sizeof kArrayVersion);
  for (std::uint64_t v : {bundle.group, m, d}) out.write(reinterpret_cast<const char*>(&v), sizeof v);
  for (const auto& a : bundle.arrays) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = a;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write_array_binary: write failed");
}

inline ArrayBundle read_array_binary(std::istream& in) {
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t dims[3];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kArrayMagic, 4) != 0) throw ParseError("not an array file", 0);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kArrayVersion) throw ParseError("unsupported array version", 0);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in) throw ParseError("truncated array header", 0);
  if (dims[0] == 0) throw ParseError("array group size must be positive", 0);
  ArrayBundle out;
  out.group = dims[0];
  const auto m = static_cast<Eigen::Index>(dims[1]);
  const auto d = static_cast<Eigen::Index>(dims[2]);
  if (m * d == 0) return out;
  while (in.peek() != std::char_traits<char>::eof()) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m, d);
    in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    if (!in) throw ParseError("truncated array data", 0);
    out.arrays.emplace_back(rm);
  }
  if (out.arrays.size() % out.group != 0) throw ParseError("array data ends inside a record", 0);
  return out;
}

/// Text fallback: one line per matrix row, columns record,individual,row,v0,v1,...
inline void write_array_csv(std::ostream& out, const ArrayBundle& bundle) {
  detail::check_bundle(bundle);
  const Eigen::Index cols = bundle.arrays.empty() ? 0 : bundle.arrays.front().cols();
  out << "record,individual,row";
  for (Eigen::Index c = 0; c < cols; ++c) out << ",v" << c;
  out << '\n';
  for (std::size_t k = 0; k < bundle.arrays.size(); ++k) {
    const auto& a = bundle.arrays[k];
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      out << k / bundle.group << ',' << k % bundle.group << ',' << r;
      for (Eigen::Index c = 0; c < cols; ++c) out << ',' << format_double(a(r, c));
      out << '\n';
    }
  }
}

inline ArrayBundle read_array_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty array file", 1);
  const std::size_t cols = detail::split(line).size();
  if (cols < 3) throw ParseError("array header needs record, individual and row columns", 1);
  std::vector<std::vector<std::vector<double>>> mats;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> keys;   // (record, individual) per matrix
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    std::uint64_t rec = 0, ind = 0, r = 0;
    if (f.size() != cols || !detail::parse_unsigned(f[0], rec) || !detail::parse_unsigned(f[1], ind) ||
        !detail::parse_unsigned(f[2], r))
      throw ParseError("malformed array row", line_no);
    if (r == 0) {
      mats.emplace_back();
      keys.emplace_back(rec, ind);
    } else if (mats.empty() || keys.back() != std::pair{rec, ind} || r != mats.back().size()) {
      throw ParseError("array row out of order", line_no);
    }
    std::vector<double> v(cols - 3);
    for (std::size_t c = 3; c < cols; ++c)
      if (!detail::parse_double(f[c], v[c - 3])) throw ParseError("non-numeric array value", line_no);
    mats.back().push_back(std::move(v));
  }
  ArrayBundle out;
  std::uint64_t group = 0;
  for (const auto& [rec, ind] : keys)
    if (rec == 0) ++group;
  out.group = std::max<std::uint64_t>(group, 1);
  for (std::size_t k = 0; k < mats.size(); ++k) {
    if (keys[k] != std::pair<std::uint64_t, std::uint64_t>{k / out.group, k % out.group})
      throw ParseError("array records out of order", 0);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(mats[k].size()), static_cast<Eigen::Index>(cols - 3));
    for (std::size_t r = 0; r < mats[k].size(); ++r)
      for (std::size_t c = 0; c + 3 < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = mats[k][r][c];
    out.arrays.push_back(std::move(m));
  }
  detail::check_bundle(out);
  return out;
}

/// Latent paths of every retained record, record-major then individual (m x 2 each).
inline ArrayBundle chain_latent_arrays(const PosteriorChain& chain) {
  ArrayBundle out;
  out.group = std::max<std::uint64_t>(chain.individuals, 1);
  for (const auto& r : chain.records) out.arrays.insert(out.arrays.end(), r.latent.begin(), r.latent.end());
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

struct ParameterSummary {
  std::string name;
  double median;
  double lower;   // 2.5%
  double upper;   // 97.5%
};

/// Posterior median and central 95% interval per scalar parameter, including
/// the derived sigma_mu2. sigma_w2 is reported for the dependent model only.
inline std::vector<ParameterSummary> summarize_chain(const PosteriorChain& chain) {
  if (chain.records.empty()) throw InsufficientSampleError("summarize_chain: no retained records");
  using Getter = double (*)(const MovementParams&);
  std::vector<std::pair<const char*, Getter>> fields{
      {"phi_inl", [](const MovementParams& p) { return p.phi_inl; }},
      {"sigma0_sq", [](const MovementParams& p) { return p.sigma0_sq; }},
      {"ratio", [](const MovementParams& p) { return p.ratio; }},
      {"sigma_mu2", [](const MovementParams& p) { return p.sigma_mu2(); }},
      {"sigma_s2", [](const MovementParams& p) { return p.sigma_s2; }},
  };
  if (chain.config.variant == ModelVariant::dependent)
    fields.push_back({"sigma_w2", [](const MovementParams& p) { return p.sigma_w2; }});
  std::vector<ParameterSummary> out;
  for (const auto& [name, get] : fields) {
    std::vector<double> v;
    v.reserve(chain.records.size());
    for (const auto& r : chain.records) v.push_back(get(r.params));
    out.push_back({name, quantile(v, 0.5), quantile(v, 0.025), quantile(v, 0.975)});
  }
  return out;
}

inline void write_fit_summary(std::ostream& out, const std::vector<ParameterSummary>& rows, ModelVariant variant) {
  out << "model,parameter,median,lower_2.5,upper_97.5\n";
  for (const auto& r : rows)
    out << variant_name(variant) << ',' << r.name << ',' << format_double(r.median) << ',' << format_double(r.lower)
        << ',' << format_double(r.upper) << '\n';
}

/// Side-by-side layout: one row per parameter, NA where a model lacks it.
inline void write_fit_comparison(std::ostream& out, const std::vector<ParameterSummary>& dep,
                                 const std::vector<ParameterSummary>& ind) {
  out << "parameter,dep_median,dep_lower_2.5,dep_upper_97.5,ind_median,ind_lower_2.5,ind_upper_97.5\n";
  auto find = [](const std::vector<ParameterSummary>& v, const std::string& n) -> const ParameterSummary* {
    for (const auto& r : v)
      if (r.name == n) return &r;
    return nullptr;
  };
  std::vector<std::string> names;
  for (const auto* v : {&dep, &ind})
    for (const auto& r : *v)
      if (std::find(names.begin(), names.end(), r.name) == names.end()) names.push_back(r.name);
  for (const auto& n : names) {
    out << n;
    for (const auto* v : {&dep, &ind}) {
      const ParameterSummary* r = find(*v, n);
      if (r) out << ',' << format_double(r->median) << ',' << format_double(r->lower) << ',' << format_double(r->upper);
      else out << ",NA,NA,NA";
    }
    out << '\n';
  }
}

struct EdgeSummary {
  double time;   // user units
  std::size_t i;
  std::size_t j;
  double median;
  double lower;
  double upper;
};

/// Posterior edge-weight trajectories for every pair i < j at every grid knot.
inline std::vector<EdgeSummary> network_trajectories(const PosteriorChain& chain, const TimeMap& time_map) {
  if (chain.config.variant != ModelVariant::dependent)
    throw std::invalid_argument("network_trajectories: the independent model has no network");
  if (chain.records.empty()) throw InsufficientSampleError("network_trajectories: no retained records");
  const std::size_t p = chain.individuals;
  const std::size_t m = chain.grid.size();
  std::vector<SocialNetwork> nets;
  nets.reserve(chain.records.size());
  for (const auto& r : chain.records) nets.push_back(record_network(r, chain.grid, p));
  std::vector<EdgeSummary> out;
  std::vector<double> w(nets.size());
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) {
        for (std::size_t r = 0; r < nets.size(); ++r) w[r] = nets[r].weight(k, i, j);
        out.push_back({time_map.to_external(chain.grid[k]), i, j, quantile(w, 0.5), quantile(w, 0.025),
                       quantile(w, 0.975)});
      }
  return out;
}

inline void write_network_csv(std::ostream& out, const std::vector<EdgeSummary>& edges, const Telemetry& data) {
  out << "time,i,j,weight,lower,upper\n";
  for (const auto& e : edges)
    out << format_double(e.time) << ',' << data.tracks.at(e.i).id << ',' << data.tracks.at(e.j).id << ','
        << format_double(e.median) << ',' << format_double(e.lower) << ',' << format_double(e.upper) << '\n';
}

inline void write_study_raw(std::ostream& out, const StudyResult& result) {
  out << "gap_fraction,tortuosity,w12,replicate,model,metric,value\n";
  for (const auto& r : result.rows)
    out << format_double(r.cell.gap_fraction) << ',' << format_double(r.cell.phi_inl) << ','
        << format_double(r.cell.w12) << ',' << r.replicate << ',' << r.model << ',' << r.metric << ','
        << format_double(r.value) << '\n';
}

inline void write_study_failures(std::ostream& out, const StudyResult& result) {
  out << "gap_fraction,tortuosity,w12,replicate,message\n";
  for (const auto& f : result.failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << format_double(f.cell.gap_fraction) << ',' << format_double(f.cell.phi_inl) << ','
        << format_double(f.cell.w12) << ',' << f.replicate << ',' << msg << '\n';
  }
}

inline void write_study_summary(std::ostream& out, const StudyResult& result) {
  out << "gap_fraction,tortuosity,w12,metric,numerator,denominator,q25,median,q75,replicates,failures\n";
  for (const auto& s : result.summary)
    out << format_double(s.cell.gap_fraction) << ',' << format_double(s.cell.phi_inl) << ','
        << format_double(s.cell.w12) << ',' << s.metric << ',' << s.numerator << ',' << s.denominator << ','
        << format_double(s.q25) << ',' << format_double(s.median) << ',' << format_double(s.q75) << ','
        << s.replicates << ',' << s.failures << '\n';
}

inline void write_study_plot(std::ostream& out, const StudyResult& result) {
  out << "gap_fraction,tortuosity,w12,metric,q25,median,q75\n";
  for (const auto& s : result.summary)
    out << format_double(s.cell.gap_fraction) << ',' << format_double(s.cell.phi_inl) << ','
        << format_double(s.cell.w12) << ',' << s.metric << ',' << format_double(s.q25) << ','
        << format_double(s.median) << ',' << format_double(s.q75) << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration

struct SimulateSettings {
  std::size_t individuals = 2;
  std::size_t observations = 60;   // per individual
  double w12 = 0.9;                // constant weight for every pair
};

struct IoSettings {
  double gap_factor = 10.0;
  std::size_t draws = 1000;        // composition draws for reconstruct
  bool binary = true;              // array outputs as binary, else CSV
};

/// Every setting of a CLI run, read from an INI file with one section per area.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t grid_points = 200;
  ChainConfig chain;
  double phi_w = 4.0 / 15.0;
  double sigma_w2 = 10.0;
  MovementParams truth;
  PriorSpec priors;
  MCMCConfig mcmc;
  SimulateSettings simulate;
  StudyConfig study;
  IoSettings io;

  RunConfig() { mcmc.fixed.sigma_w2 = true; }

  MovementParams truth_params() const {
    MovementParams t = truth;
    t.phi_w = phi_w;
    t.sigma_w2 = sigma_w2;
    return t;
  }

  MCMCConfig mcmc_config(ModelVariant variant) const {
    MCMCConfig c = mcmc;
    c.grid_points = grid_points;
    c.chain = chain;
    c.phi_w = phi_w;
    c.sigma_w2 = sigma_w2;
    c.variant = variant;
    c.seed = derive_seed(seed, {static_cast<std::uint64_t>(variant)});
    return c;
  }

  StudyConfig study_config() const {
    StudyConfig s = study;
    s.grid_points = grid_points;
    s.truth = truth_params();
    return s;
  }

  void validate() const {
    if (grid_points < 2) throw std::invalid_argument("grid.points must be at least 2");
    chain.validate();
    truth_params().validate();
    priors.validate();
    mcmc_config(ModelVariant::dependent).validate();
    study_config().validate();
    if (simulate.individuals < 1) throw std::invalid_argument("simulate.individuals must be positive");
    if (simulate.observations < 2) throw std::invalid_argument("simulate.observations must be at least 2");
    if (!(simulate.w12 >= 0.0 && simulate.w12 <= 1.0)) throw std::invalid_argument("simulate.w12 must lie in [0, 1]");
    if (!(io.gap_factor > 1.0)) throw std::invalid_argument("io.gap_factor must exceed 1");
    if (io.draws < 100) throw std::invalid_argument("io.draws must be at least 100");
  }
};

namespace detail {

inline std::string chain_to_string(const ChainConfig& c) {
  std::string s;
  for (Stage st : c.stages) s += (s.empty() ? "" : ",") + std::string(stage_name(st));
  return s;
}

inline ChainConfig chain_from_string(const std::string& text) {
  ChainConfig c;
  c.stages.clear();
  for (auto f : split(text)) {
    if (f == "bm") c.stages.push_back(Stage::brownian);
    else if (f == "soc") c.stages.push_back(Stage::social);
    else if (f == "inl") c.stages.push_back(Stage::inertial);
    else throw std::invalid_argument("unknown stage '" + std::string(f) + "'");
  }
  c.validate();
  return c;
}

inline std::string list_to_string(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
  return s;
}

inline std::vector<double> list_from_string(const std::string& text) {
  std::vector<double> out;
  for (auto f : split(text)) {
    double v;
    if (!parse_double(f, v)) throw std::invalid_argument("non-numeric list entry '" + std::string(f) + "'");
    out.push_back(v);
  }
  return out;
}

struct ConfigField {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Access>
ConfigField real_field(const char* section, const char* key, Access access) {
  return {section, key, [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, const std::string& v) {
            if (!parse_double(v, access(c))) throw std::invalid_argument("expected a number, got '" + v + "'");
          }};
}

template <class Access>
ConfigField count_field(const char* section, const char* key, Access access) {
  return {section, key, [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, const std::string& v) {
            std::uint64_t n;
            if (!parse_unsigned(v, n)) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(n);
          }};
}

template <class Access>
ConfigField flag_field(const char* section, const char* key, Access access) {
  return {section, key, [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)) ? "true" : "false"; },
          [access](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1") access(c) = true;
            else if (v == "false" || v == "0") access(c) = false;
            else throw std::invalid_argument("expected true or false, got '" + v + "'");
          }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(count_field("run", "seed", [](RunConfig& c) -> auto& { return c.seed; }));
    f.push_back(count_field("grid", "points", [](RunConfig& c) -> auto& { return c.grid_points; }));
    f.push_back({"model", "chain", [](const RunConfig& c) { return chain_to_string(c.chain); },
                 [](RunConfig& c, const std::string& v) { c.chain = chain_from_string(v); }});
    f.push_back(real_field("model", "phi_w", [](RunConfig& c) -> auto& { return c.phi_w; }));
    f.push_back(real_field("model", "sigma_w2", [](RunConfig& c) -> auto& { return c.sigma_w2; }));
    f.push_back(real_field("truth", "phi_inl", [](RunConfig& c) -> auto& { return c.truth.phi_inl; }));
    f.push_back(real_field("truth", "sigma_s2", [](RunConfig& c) -> auto& { return c.truth.sigma_s2; }));
    f.push_back(real_field("truth", "ratio", [](RunConfig& c) -> auto& { return c.truth.ratio; }));
    f.push_back(real_field("truth", "sigma0_sq", [](RunConfig& c) -> auto& { return c.truth.sigma0_sq; }));
    f.push_back(real_field("priors", "phi_inl_shape", [](RunConfig& c) -> auto& { return c.priors.phi_inl.shape; }));
    f.push_back(real_field("priors", "phi_inl_rate", [](RunConfig& c) -> auto& { return c.priors.phi_inl.rate; }));
    f.push_back(real_field("priors", "sigma0_sq_shape", [](RunConfig& c) -> auto& { return c.priors.sigma0_sq.shape; }));
    f.push_back(real_field("priors", "sigma0_sq_scale", [](RunConfig& c) -> auto& { return c.priors.sigma0_sq.scale; }));
    f.push_back(real_field("priors", "ratio_shape", [](RunConfig& c) -> auto& { return c.priors.ratio.shape; }));
    f.push_back(real_field("priors", "ratio_scale", [](RunConfig& c) -> auto& { return c.priors.ratio.scale; }));
    f.push_back(real_field("priors", "sigma_s2_shape", [](RunConfig& c) -> auto& { return c.priors.sigma_s2.shape; }));
    f.push_back(real_field("priors", "sigma_s2_scale", [](RunConfig& c) -> auto& { return c.priors.sigma_s2.scale; }));
    f.push_back(real_field("priors", "sigma_w2_shape", [](RunConfig& c) -> auto& { return c.priors.sigma_w2.shape; }));
    f.push_back(real_field("priors", "sigma_w2_scale", [](RunConfig& c) -> auto& { return c.priors.sigma_w2.scale; }));
    f.push_back(count_field("mcmc", "iterations", [](RunConfig& c) -> auto& { return c.mcmc.iterations; }));
    f.push_back(count_field("mcmc", "burn_in", [](RunConfig& c) -> auto& { return c.mcmc.burn_in; }));
    f.push_back(count_field("mcmc", "thin", [](RunConfig& c) -> auto& { return c.mcmc.thin; }));
    f.push_back(real_field("mcmc", "beta", [](RunConfig& c) -> auto& { return c.mcmc.beta; }));
    f.push_back(flag_field("mcmc", "adapt", [](RunConfig& c) -> auto& { return c.mcmc.adapt; }));
    f.push_back(real_field("mcmc", "scale_phi_inl", [](RunConfig& c) -> auto& { return c.mcmc.scales.phi_inl; }));
    f.push_back(real_field("mcmc", "scale_sigma_s2", [](RunConfig& c) -> auto& { return c.mcmc.scales.sigma_s2; }));
    f.push_back(real_field("mcmc", "scale_ratio", [](RunConfig& c) -> auto& { return c.mcmc.scales.ratio; }));
    f.push_back(real_field("mcmc", "scale_sigma0_sq", [](RunConfig& c) -> auto& { return c.mcmc.scales.sigma0_sq; }));
    f.push_back(flag_field("mcmc", "fix_sigma_w2", [](RunConfig& c) -> auto& { return c.mcmc.fixed.sigma_w2; }));
    f.push_back(count_field("simulate", "individuals", [](RunConfig& c) -> auto& { return c.simulate.individuals; }));
    f.push_back(count_field("simulate", "observations", [](RunConfig& c) -> auto& { return c.simulate.observations; }));
    f.push_back(real_field("simulate", "w12", [](RunConfig& c) -> auto& { return c.simulate.w12; }));
    f.push_back({"study", "weights", [](const RunConfig& c) { return list_to_string(c.study.weights); },
                 [](RunConfig& c, const std::string& v) { c.study.weights = list_from_string(v); }});
    f.push_back({"study", "gap_fractions", [](const RunConfig& c) { return list_to_string(c.study.gap_fractions); },
                 [](RunConfig& c, const std::string& v) { c.study.gap_fractions = list_from_string(v); }});
    f.push_back({"study", "tortuosity", [](const RunConfig& c) { return list_to_string(c.study.tortuosity); },
                 [](RunConfig& c, const std::string& v) { c.study.tortuosity = list_from_string(v); }});
    f.push_back(count_field("study", "replicates", [](RunConfig& c) -> auto& { return c.study.replicates; }));
    f.push_back(count_field("study", "path_draws", [](RunConfig& c) -> auto& { return c.study.path_draws; }));
    f.push_back(count_field("study", "observations", [](RunConfig& c) -> auto& { return c.study.observations; }));
    f.push_back(count_field("study", "threads", [](RunConfig& c) -> auto& { return c.study.threads; }));
    f.push_back(real_field("io", "gap_factor", [](RunConfig& c) -> auto& { return c.io.gap_factor; }));
    f.push_back(count_field("io", "draws", [](RunConfig& c) -> auto& { return c.io.draws; }));
    f.push_back(flag_field("io", "binary", [](RunConfig& c) -> auto& { return c.io.binary; }));
    return f;
  }();
  return fields;
}

}  // namespace detail

/// Parses INI text on top of the defaults. Unknown sections or keys and
/// malformed values are ParseErrors; out-of-range values are invalid_argument.
inline RunConfig parse_run_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.message(), e.line());
  }
  RunConfig cfg;
  const auto& fields = detail::config_fields();
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty())
      throw ParseError("key '" + section + "' outside any section", 0);
    for (const auto& [key, value] : keys) {
      auto it = std::find_if(fields.begin(), fields.end(),
                             [&](const detail::ConfigField& f) { return section == f.section && key == f.key; });
      if (it == fields.end()) throw ParseError("unknown key '" + section + "." + key + "'", 0);
      try {
        it->set(cfg, value.data());
      } catch (const std::invalid_argument& e) {
        throw ParseError(section + "." + key + ": " + e.what(), 0);
      }
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

inline void write_run_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const auto& f : detail::config_fields()) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
}

}  // namespace pcc

#endif  // PCC_IO_HPP
