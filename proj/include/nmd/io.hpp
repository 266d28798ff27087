#ifndef NMD_IO_HPP_
#define NMD_IO_HPP_

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nmd/admm.hpp"
#include "nmd/dense_matrix.hpp"
#include "nmd/error.hpp"
#include "nmd/mask.hpp"
#include "nmd/random.hpp"

namespace nmd {

enum class MatrixFormat { matrix_market, csv, pgm };

/// Picks the format from the file extension (.mtx/.mm, .csv/.txt, .pgm).
inline std::optional<MatrixFormat> format_from_path(
    const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".mtx" || ext == ".mm") return MatrixFormat::matrix_market;
  if (ext == ".csv" || ext == ".txt") return MatrixFormat::csv;
  if (ext == ".pgm") return MatrixFormat::pgm;
  return std::nullopt;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(s.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// 1-based column of `field` inside `line`.
inline std::size_t column_of(std::string_view line, std::string_view field) {
  return static_cast<std::size_t>(field.data() - line.data()) + 1;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV

/// Comma-separated values with '.' decimals. A first line that does not
/// parse as numbers is taken as a header and skipped.
inline DenseMatrix parse_csv(std::string_view text) {
  const auto lines = detail::split_lines(text);
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string_view line = lines[li];
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    std::vector<double> values;
    values.reserve(fields.size());
    std::optional<std::size_t> bad_field;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const auto v = detail::parse_double(fields[f]);
      if (!v) {
        bad_field = f;
        break;
      }
      values.push_back(*v);
    }
    if (bad_field) {
      if (rows == 0 && data.empty() && cols == 0) {
        cols = fields.size();  // header
        continue;
      }
      throw ParseError("not a number: '" + std::string(fields[*bad_field]) + "'",
                       li + 1, detail::column_of(line, fields[*bad_field]));
    }
    if (cols == 0) cols = values.size();
    if (values.size() != cols) {
      throw ParseError("expected " + std::to_string(cols) + " fields, got " +
                           std::to_string(values.size()),
                       li + 1);
    }
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }
  if (rows == 0) return DenseMatrix(0, cols);
  return DenseMatrix(rows, cols, std::move(data));
}

inline void write_csv(std::ostream& os, const DenseMatrix& X) {
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (std::size_t j = 0; j < X.cols(); ++j) {
      if (j != 0) os << ',';
      os << detail::format_double(X(i, j));
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Matrix Market

/// "%%MatrixMarket matrix array real general" (column-major values) or
/// "%%MatrixMarket matrix coordinate real general" (1-based triplets,
/// unlisted entries are zero). "integer" fields are accepted as well.
inline DenseMatrix parse_matrix_market(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw ParseError("empty matrix market file", 1);
  const auto head = detail::split_whitespace(lines[0]);
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  if (head.size() != 5 || lower(head[0]) != "%%matrixmarket" ||
      lower(head[1]) != "matrix") {
    throw ParseError("missing %%MatrixMarket matrix header", 1, 1);
  }
  const std::string layout = lower(head[2]);
  const std::string field = lower(head[3]);
  const std::string symmetry = lower(head[4]);
  if (layout != "array" && layout != "coordinate")
    throw ParseError("unsupported layout '" + layout + "'", 1);
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError("unsupported field '" + field + "'", 1);
  if (symmetry != "general")
    throw ParseError("unsupported symmetry '" + symmetry + "'", 1);

  std::size_t li = 1;
  auto next_data_line = [&]() -> std::optional<std::size_t> {
    while (li < lines.size()) {
      const auto t = detail::trim(lines[li]);
      if (!t.empty() && t.front() != '%') return li++;
      ++li;
    }
    return std::nullopt;
  };
  auto parse_count = [&](std::string_view tok, std::size_t line) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("expected a count, got '" + std::string(tok) + "'",
                       line + 1, detail::column_of(lines[line], tok));
    }
    return v;
  };

  const auto size_line = next_data_line();
  if (!size_line) throw ParseError("missing size line", lines.size() + 1);
  const auto sizes = detail::split_whitespace(lines[*size_line]);
  const std::size_t want = layout == "array" ? 2 : 3;
  if (sizes.size() != want)
    throw ParseError("size line needs " + std::to_string(want) + " fields",
                     *size_line + 1);
  const std::size_t m = parse_count(sizes[0], *size_line);
  const std::size_t n = parse_count(sizes[1], *size_line);
  DenseMatrix X(m, n, 0.0);

  auto value_of = [&](std::string_view tok, std::size_t line) {
    const auto v = detail::parse_double(tok);
    if (!v) {
      throw ParseError("not a number: '" + std::string(tok) + "'", line + 1,
                       detail::column_of(lines[line], tok));
    }
    return *v;
  };

  if (layout == "array") {
    std::size_t k = 0;
    while (k < m * n) {
      const auto l = next_data_line();
      if (!l) throw ParseError("expected " + std::to_string(m * n) +
                                   " values, got " + std::to_string(k),
                               lines.size() + 1);
      for (auto tok : detail::split_whitespace(lines[*l])) {
        if (k == m * n) throw ParseError("too many values", *l + 1);
        X(k % m, k / m) = value_of(tok, *l);
        ++k;
      }
    }
  } else {
    const std::size_t nnz = parse_count(sizes[2], *size_line);
    for (std::size_t e = 0; e < nnz; ++e) {
      const auto l = next_data_line();
      if (!l) throw ParseError("expected " + std::to_string(nnz) + " entries",
                               lines.size() + 1);
      const auto toks = detail::split_whitespace(lines[*l]);
      if (toks.size() != 3) throw ParseError("entry needs 'i j value'", *l + 1);
      const std::size_t i = parse_count(toks[0], *l);
      const std::size_t j = parse_count(toks[1], *l);
      if (i < 1 || i > m || j < 1 || j > n) {
        throw ParseError("index out of range", *l + 1,
                         detail::column_of(lines[*l], toks[0]));
      }
      X(i - 1, j - 1) = value_of(toks[2], *l);
    }
  }
  if (next_data_line()) throw ParseError("trailing data", li);
  return X;
}

inline void write_matrix_market(std::ostream& os, const DenseMatrix& X) {
  os << "%%MatrixMarket matrix array real general\n";
  os << X.rows() << ' ' << X.cols() << '\n';
  for (std::size_t j = 0; j < X.cols(); ++j)
    for (std::size_t i = 0; i < X.rows(); ++i)
      os << detail::format_double(X(i, j)) << '\n';
}

// ---------------------------------------------------------------------------
// PGM

/// P2 (ASCII) or P5 (binary) graymap; rows = image height. Values stay in
/// [0, maxval].
inline DenseMatrix parse_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  std::size_t line = 1;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (c == '\n') ++line;
        ++pos;
      } else {
        break;
      }
    }
  };
  auto next_token = [&]() -> std::string_view {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos])) &&
           bytes[pos] != '#')
      ++pos;
    if (start == pos) throw ParseError("unexpected end of PGM data", line);
    return bytes.substr(start, pos - start);
  };
  auto next_count = [&](const char* what) {
    const auto tok = next_token();
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw ParseError(std::string("bad PGM ") + what + " '" + std::string(tok) + "'",
                       line);
    return v;
  };

  const auto magic = next_token();
  if (magic != "P2" && magic != "P5")
    throw ParseError("unsupported PGM magic '" + std::string(magic) + "'", 1, 1);
  const std::size_t width = next_count("width");
  const std::size_t height = next_count("height");
  const std::size_t maxval = next_count("maxval");
  if (maxval < 1 || maxval > 65535) throw ParseError("PGM maxval out of range", line);
  DenseMatrix X(height, width);

  if (magic == "P2") {
    for (std::size_t k = 0; k < X.size(); ++k) {
      const std::size_t v = next_count("sample");
      if (v > maxval) throw ParseError("PGM sample exceeds maxval", line);
      X[k] = static_cast<double>(v);
    }
    return X;
  }
  // P5: exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size()) throw ParseError("missing PGM raster", line);
  ++pos;
  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  if (bytes.size() - pos < X.size() * sample_bytes)
    throw ParseError("truncated PGM raster", line);
  for (std::size_t k = 0; k < X.size(); ++k) {
    std::size_t v = static_cast<unsigned char>(bytes[pos++]);
    if (sample_bytes == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos++]);
    if (v > maxval) throw ParseError("PGM sample exceeds maxval", line);
    X[k] = static_cast<double>(v);
  }
  return X;
}

/// Writes a binary PGM. Entries are rounded and must lie in [0, maxval].
inline void write_pgm(std::ostream& os, const DenseMatrix& X,
                      std::size_t maxval = 255) {
  if (maxval < 1 || maxval > 65535) throw DomainError("PGM maxval out of range");
  os << "P5\n" << X.cols() << ' ' << X.rows() << '\n' << maxval << '\n';
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double r = std::round(X[k]);
    if (!(r >= 0.0 && r <= static_cast<double>(maxval)))
      throw DomainError("write_pgm: value outside [0, maxval]");
    const auto v = static_cast<std::uint32_t>(r);
    if (maxval >= 256) os.put(static_cast<char>((v >> 8) & 0xff));
    os.put(static_cast<char>(v & 0xff));
  }
}

// ---------------------------------------------------------------------------
// File entry points

inline DenseMatrix load_matrix(const std::filesystem::path& path,
                               std::optional<MatrixFormat> format = {}) {
  if (!format) format = format_from_path(path);
  if (!format) throw Error("cannot infer matrix format of " + path.string());
  const std::string text = detail::read_file(path);
  try {
    switch (*format) {
      case MatrixFormat::matrix_market: return parse_matrix_market(text);
      case MatrixFormat::csv: return parse_csv(text);
      case MatrixFormat::pgm: return parse_pgm(text);
    }
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line(), e.column());
  }
  return {};
}

inline void save_matrix(const std::filesystem::path& path, const DenseMatrix& X,
                        std::optional<MatrixFormat> format = {}) {
  if (!format) format = format_from_path(path);
  if (!format) throw Error("cannot infer matrix format of " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  switch (*format) {
    case MatrixFormat::matrix_market: write_matrix_market(out, X); break;
    case MatrixFormat::csv: write_csv(out, X); break;
    case MatrixFormat::pgm: write_pgm(out, X); break;
  }
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Masks

/// Either a 0/1 CSV of the matrix shape, or whitespace-separated 1-based
/// "i j" pairs listing the observed entries.
inline ObservationMask parse_mask(std::string_view text, std::size_t rows,
                                  std::size_t cols) {
  const auto lines = detail::split_lines(text);
  bool coordinate = false;
  for (auto l : lines) {
    const auto t = detail::trim(l);
    if (t.empty() || t.front() == '%' || t.front() == '#') continue;
    coordinate = t.find(',') == std::string_view::npos &&
                 detail::split_whitespace(t).size() == 2;
    break;
  }
  if (!coordinate) {
    const DenseMatrix bits = parse_csv(text);
    if (bits.rows() != rows || bits.cols() != cols) {
      throw ShapeError("mask is " + shape_string(bits) + ", data is " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
    std::vector<std::uint8_t> out(bits.size());
    for (std::size_t k = 0; k < bits.size(); ++k) {
      if (bits[k] != 0.0 && bits[k] != 1.0)
        throw ParseError("mask entries must be 0 or 1", k / cols + 1);
      out[k] = bits[k] == 1.0 ? 1 : 0;
    }
    return ObservationMask(rows, cols, std::move(out));
  }
  ObservationMask mask(rows, cols, false);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto t = detail::trim(lines[li]);
    if (t.empty() || t.front() == '%' || t.front() == '#') continue;
    const auto toks = detail::split_whitespace(t);
    std::size_t idx[2] = {0, 0};
    if (toks.size() != 2) throw ParseError("expected 'i j'", li + 1);
    for (int c = 0; c < 2; ++c) {
      const auto [ptr, ec] = std::from_chars(
          toks[c].data(), toks[c].data() + toks[c].size(), idx[c]);
      if (ec != std::errc() || ptr != toks[c].data() + toks[c].size())
        throw ParseError("bad index '" + std::string(toks[c]) + "'", li + 1,
                         detail::column_of(lines[li], toks[c]));
    }
    if (idx[0] < 1 || idx[0] > rows || idx[1] < 1 || idx[1] > cols)
      throw ParseError("index out of range", li + 1);
    mask.set(idx[0] - 1, idx[1] - 1, true);
  }
  return mask;
}

inline ObservationMask load_mask(const std::filesystem::path& path,
                                 std::size_t rows, std::size_t cols) {
  return parse_mask(detail::read_file(path), rows, cols);
}

inline void save_mask(const std::filesystem::path& path,
                      const ObservationMask& mask) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (j != 0) out << ',';
      out << (mask.observed(i, j) ? '1' : '0');
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Noise, masks, splits

/// X / max(X).
inline DenseMatrix normalize_max(const DenseMatrix& X) {
  if (X.empty()) throw DomainError("normalize_max: empty matrix");
  const double mx = *std::max_element(X.values().begin(), X.values().end());
  if (!(mx > 0.0)) throw DomainError("normalize_max: maximum must be positive");
  DenseMatrix out = X;
  for (double& v : out.values()) v /= mx;
  return out;
}

/// Per entry u ~ U(0,1): u < d/2 -> 0 (pepper), u < d -> 1 (salt).
inline DenseMatrix add_salt_pepper(const DenseMatrix& X, double density,
                                   std::uint64_t seed) {
  if (!(density >= 0.0 && density <= 1.0))
    throw DomainError("add_salt_pepper: density must lie in [0, 1]");
  Rng rng(seed);
  DenseMatrix out = X;
  for (double& v : out.values()) {
    const double u = rng.uniform_open();
    if (u < 0.5 * density) {
      v = 0.0;
    } else if (u < density) {
      v = 1.0;
    }
  }
  return out;
}

/// Entry ij becomes Poisson(scale * X_ij) / scale.
inline DenseMatrix add_poisson(const DenseMatrix& X, double scale,
                               std::uint64_t seed) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw DomainError("add_poisson: scale must be positive");
  Rng rng(seed);
  DenseMatrix out = X;
  for (double& v : out.values()) {
    if (v < 0.0) throw DomainError("add_poisson: data must be nonnegative");
    v = static_cast<double>(rng.poisson(scale * v)) / scale;
  }
  return out;
}

namespace detail {
// Fisher-Yates with the portable generator.
inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.index(i));
    std::swap(v[i - 1], v[j]);
  }
}
}  // namespace detail

/// Exactly round(fraction * rows * cols) observed entries, uniformly at
/// random without replacement.
inline ObservationMask make_mask(std::size_t rows, std::size_t cols,
                                 double observed_fraction, std::uint64_t seed) {
  if (!(observed_fraction >= 0.0 && observed_fraction <= 1.0))
    throw DomainError("make_mask: fraction must lie in [0, 1]");
  const std::size_t total = rows * cols;
  const auto keep = static_cast<std::size_t>(
      std::llround(observed_fraction * static_cast<double>(total)));
  if (keep == 0) throw DomainError("make_mask: no observed entries");
  std::vector<std::size_t> order(total);
  for (std::size_t k = 0; k < total; ++k) order[k] = k;
  Rng rng(seed);
  detail::shuffle(order, rng);
  ObservationMask mask(rows, cols, false);
  for (std::size_t k = 0; k < keep; ++k) mask.set(order[k], true);
  return mask;
}

struct CompletionSplit {
  ObservationMask train;
  ObservationMask test;
};

/// Seeded partition of the observed entries; train gets
/// round(train_fraction * |observed|).
inline CompletionSplit split_train_test(const ObservationMask& mask,
                                        double train_fraction,
                                        std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DomainError("split_train_test: fraction must lie in (0, 1)");
  std::vector<std::size_t> observed = mask.indices();
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(observed.size())));
  if (n_train == 0 || n_train == observed.size())
    throw DomainError("split_train_test: a side of the split is empty");
  Rng rng(seed);
  detail::shuffle(observed, rng);
  CompletionSplit split{ObservationMask(mask.rows(), mask.cols(), false),
                        ObservationMask(mask.rows(), mask.cols(), false)};
  for (std::size_t k = 0; k < observed.size(); ++k) {
    (k < n_train ? split.train : split.test).set(observed[k], true);
  }
  return split;
}

/// sqrt(mean over observed entries of (X - P)^2).
inline double rmse_on(const DenseMatrix& X, const DenseMatrix& P,
                      const ObservationMask& mask) {
  if (!X.same_shape(P) || mask.rows() != X.rows() || mask.cols() != X.cols())
    throw ShapeError("rmse_on: shape mismatch");
  mask.require_nonempty("rmse_on");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    if (!mask.observed(k)) continue;
    const double e = X[k] - P[k];
    sum += e * e;
    ++count;
  }
  return std::sqrt(sum / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// Iteration log

inline constexpr std::string_view kIterationLogHeader =
    "iter,elapsed_s,objective,primal_res,dual_res,rho";

inline void write_iteration_log_header(std::ostream& os) {
  os << kIterationLogHeader << '\n';
}

inline void write_iteration_row(std::ostream& os, const IterationRecord& r) {
  os << r.iter << ',' << detail::format_double(r.elapsed) << ','
     << detail::format_double(r.objective) << ','
     << detail::format_double(r.primal_res) << ','
     << detail::format_double(r.dual_res) << ','
     << detail::format_double(r.rho) << '\n';
}

inline void write_iteration_log(std::ostream& os,
                                const std::vector<IterationRecord>& records) {
  write_iteration_log_header(os);
  for (const auto& r : records) write_iteration_row(os, r);
}

inline std::vector<IterationRecord> parse_iteration_log(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || detail::trim(lines[0]) != kIterationLogHeader)
    throw ParseError("iteration log header mismatch", 1);
  std::vector<IterationRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = detail::split_commas(lines[li]);
    if (fields.size() != 6) throw ParseError("expected 6 fields", li + 1);
    double v[6];
    for (int f = 0; f < 6; ++f) {
      const auto p = detail::parse_double(fields[f]);
      if (!p) {
        throw ParseError("not a number", li + 1,
                         detail::column_of(lines[li], fields[f]));
      }
      v[f] = *p;
    }
    out.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5]});
  }
  return out;
}

}  // namespace nmd

#endif  // NMD_IO_HPP_
