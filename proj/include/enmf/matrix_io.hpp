#pragma once

#include "enmf/core.hpp"

#include <filesystem>
#include <string_view>

namespace enmf {

enum class MatrixFormat {
  matrix_market,  // "%%MatrixMarket matrix coordinate real general" (array also read)
  csv,            // first line "rows,cols", then one comma-separated row per line
  binary,         // u64 rows, u64 cols (little-endian), then rows*cols f64 row-major
};

/// Parses "mtx"/"matrix_market", "csv", "bin"/"binary".
MatrixFormat parse_format(std::string_view name);
std::string_view format_name(MatrixFormat format);
/// Guesses the format from the file extension (.mtx, .csv, .bin).
MatrixFormat format_from_extension(const std::filesystem::path& path);

struct ReadOptions {
  /// Reject files containing negative entries (data that must feed NMF).
  bool require_nonnegative = false;
};

Matrix read_matrix(const std::filesystem::path& path, MatrixFormat format,
                   const ReadOptions& options = {});
void write_matrix(const Matrix& M, const std::filesystem::path& path, MatrixFormat format);

}  // namespace enmf
