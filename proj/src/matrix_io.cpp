#include "enmf/matrix_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace enmf {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view token, std::size_t line, const std::filesystem::path& path) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": invalid number '" +
                         std::string(token) + "'",
                     line);
  }
  return value;
}

long long parse_int(std::string_view token, std::size_t line, const std::filesystem::path& path) {
  token = trim(token);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": invalid integer '" +
                         std::string(token) + "'",
                     line);
  }
  return value;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

Matrix read_matrix_market(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file", 1);
  ++lineno;
  const auto header = split_ws(line);
  if (header.size() < 5 || lower(header[0]) != "%%matrixmarket" || lower(header[1]) != "matrix") {
    throw ParseError(path.string() + ":1: missing %%MatrixMarket matrix header", 1);
  }
  const std::string layout = lower(header[2]);
  const std::string field = lower(header[3]);
  const std::string symmetry = lower(header[4]);
  if (layout != "coordinate" && layout != "array") {
    throw ParseError(path.string() + ":1: unsupported layout '" + layout + "'", 1);
  }
  if (field != "real" && field != "integer" && field != "double") {
    throw ParseError(path.string() + ":1: unsupported field '" + field + "'", 1);
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    throw ParseError(path.string() + ":1: unsupported symmetry '" + symmetry + "'", 1);
  }
  const bool symmetric = symmetry == "symmetric";

  // Size line: first non-comment, non-blank line.
  std::vector<std::string_view> size_tokens;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '%') continue;
    size_tokens = split_ws(line);
    break;
  }
  const std::size_t expected = layout == "coordinate" ? 3 : 2;
  if (size_tokens.size() != expected) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed size line",
                     lineno);
  }
  const long long rows = parse_int(size_tokens[0], lineno, path);
  const long long cols = parse_int(size_tokens[1], lineno, path);
  if (rows < 0 || cols < 0) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": negative dimensions",
                     lineno);
  }
  Matrix M = Matrix::Zero(rows, cols);

  if (layout == "coordinate") {
    const long long nnz = parse_int(size_tokens[2], lineno, path);
    long long seen = 0;
    while (seen < nnz && std::getline(in, line)) {
      ++lineno;
      const std::string_view t = trim(line);
      if (t.empty() || t.front() == '%') continue;
      const auto tok = split_ws(line);
      if (tok.size() != 3) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected 'row col value'",
                         lineno);
      }
      const long long i = parse_int(tok[0], lineno, path);
      const long long j = parse_int(tok[1], lineno, path);
      if (i < 1 || i > rows || j < 1 || j > cols) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": index out of range",
                         lineno);
      }
      const double v = parse_double(tok[2], lineno, path);
      M(i - 1, j - 1) = v;
      if (symmetric) M(j - 1, i - 1) = v;
      ++seen;
    }
    if (seen != nnz) {
      throw ParseError(path.string() + ": expected " + std::to_string(nnz) + " entries, found " +
                           std::to_string(seen),
                       lineno);
    }
  } else {
    // Array layout is column-major.
    long long k = 0;
    const long long total = rows * cols;
    while (k < total && std::getline(in, line)) {
      ++lineno;
      const std::string_view t = trim(line);
      if (t.empty() || t.front() == '%') continue;
      for (const auto tok : split_ws(line)) {
        if (k >= total) {
          throw ParseError(path.string() + ":" + std::to_string(lineno) + ": too many values",
                           lineno);
        }
        M(k % rows, k / rows) = parse_double(tok, lineno, path);
        ++k;
      }
    }
    if (k != total) {
      throw ParseError(path.string() + ": expected " + std::to_string(total) + " values", lineno);
    }
  }
  return M;
}

Matrix read_csv(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(path.string() + ": empty file", 1);
  const auto comma = line.find(',');
  if (comma == std::string::npos) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": header must be 'rows,cols'",
                     lineno);
  }
  const long long rows = parse_int(std::string_view(line).substr(0, comma), lineno, path);
  const long long cols = parse_int(std::string_view(line).substr(comma + 1), lineno, path);
  if (rows < 0 || cols < 0) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": negative dimensions",
                     lineno);
  }
  Matrix M(rows, cols);
  for (long long i = 0; i < rows; ++i) {
    if (!next_line()) {
      throw ParseError(path.string() + ": expected " + std::to_string(rows) + " data rows",
                       lineno + 1);
    }
    std::string_view rest(line);
    long long j = 0;
    while (true) {
      const auto pos = rest.find(',');
      const std::string_view cell = rest.substr(0, pos);
      if (j >= cols) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": too many columns",
                         lineno);
      }
      M(i, j++) = parse_double(cell, lineno, path);
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (j != cols) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(cols) + " columns, found " + std::to_string(j),
                       lineno);
    }
  }
  if (next_line()) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": trailing data", lineno);
  }
  return M;
}

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

Matrix read_binary(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(dims))) {
    throw ParseError(path.string() + ": truncated 16-byte header", static_cast<std::size_t>(in.gcount()));
  }
  const std::uint64_t rows = to_little_endian(dims[0]);
  const std::uint64_t cols = to_little_endian(dims[1]);
  if (rows > (1ULL << 32) || cols > (1ULL << 32)) {
    throw ParseError(path.string() + ": implausible dimensions in header", 0);
  }
  Matrix M(static_cast<Index>(rows), static_cast<Index>(cols));
  const std::streamsize bytes = static_cast<std::streamsize>(rows * cols * sizeof(double));
  in.read(reinterpret_cast<char*>(M.data()), bytes);
  if (in.gcount() != bytes) {
    throw ParseError(path.string() + ": payload truncated at byte offset " +
                         std::to_string(16 + in.gcount()),
                     static_cast<std::size_t>(16 + in.gcount()));
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (Index k = 0; k < M.size(); ++k) M.data()[k] = to_little_endian(M.data()[k]);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(path.string() + ": trailing bytes after payload",
                     static_cast<std::size_t>(16 + bytes));
  }
  return M;
}

}  // namespace

MatrixFormat parse_format(std::string_view name) {
  const std::string n = lower(name);
  if (n == "mtx" || n == "mm" || n == "matrix_market" || n == "matrixmarket") {
    return MatrixFormat::matrix_market;
  }
  if (n == "csv") return MatrixFormat::csv;
  if (n == "bin" || n == "binary" || n == "raw") return MatrixFormat::binary;
  throw ValidationError("unknown matrix format '" + std::string(name) + "'");
}

std::string_view format_name(MatrixFormat format) {
  switch (format) {
    case MatrixFormat::matrix_market:
      return "mtx";
    case MatrixFormat::csv:
      return "csv";
    case MatrixFormat::binary:
      return "bin";
  }
  return "bin";
}

MatrixFormat format_from_extension(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext.empty()) throw ValidationError("cannot infer format of '" + path.string() + "'");
  return parse_format(std::string_view(ext).substr(1));
}

Matrix read_matrix(const std::filesystem::path& path, MatrixFormat format,
                   const ReadOptions& options) {
  std::ifstream in(path, format == MatrixFormat::binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Matrix M;
  switch (format) {
    case MatrixFormat::matrix_market:
      M = read_matrix_market(in, path);
      break;
    case MatrixFormat::csv:
      M = read_csv(in, path);
      break;
    case MatrixFormat::binary:
      M = read_binary(in, path);
      break;
  }
  if (!M.allFinite()) throw ValidationError("'" + path.string() + "' contains NaN or Inf");
  if (options.require_nonnegative && M.size() > 0 && M.minCoeff() < 0.0) {
    throw ValidationError("'" + path.string() + "' contains negative entries");
  }
  return M;
}

void write_matrix(const Matrix& M, const std::filesystem::path& path, MatrixFormat format) {
  std::ofstream out(path, format == MatrixFormat::binary ? std::ios::binary | std::ios::trunc
                                                          : std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  switch (format) {
    case MatrixFormat::matrix_market: {
      Index nnz = 0;
      for (Index k = 0; k < M.size(); ++k) nnz += M.data()[k] != 0.0;
      out << "%%MatrixMarket matrix coordinate real general\n";
      out << M.rows() << ' ' << M.cols() << ' ' << nnz << '\n';
      for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) {
          if (M(i, j) != 0.0) out << i + 1 << ' ' << j + 1 << ' ' << format_double(M(i, j)) << '\n';
        }
      }
      break;
    }
    case MatrixFormat::csv: {
      out << M.rows() << ',' << M.cols() << '\n';
      for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) {
          if (j > 0) out << ',';
          out << format_double(M(i, j));
        }
        out << '\n';
      }
      break;
    }
    case MatrixFormat::binary: {
      const std::uint64_t dims[2] = {to_little_endian(static_cast<std::uint64_t>(M.rows())),
                                     to_little_endian(static_cast<std::uint64_t>(M.cols()))};
      out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
      if constexpr (std::endian::native == std::endian::big) {
        for (Index k = 0; k < M.size(); ++k) {
          const double v = to_little_endian(M.data()[k]);
          out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
      } else {
        out.write(reinterpret_cast<const char*>(M.data()),
                  static_cast<std::streamsize>(M.size() * sizeof(double)));
      }
      break;
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace enmf
