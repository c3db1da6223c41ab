#include "enmf/matrix_io.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <fstream>

using namespace enmf;
namespace fs = std::filesystem;

namespace {

class MatrixIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("enmf_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_text(const std::string& name, const std::string& body) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(MatrixIoTest, IdentityRoundTripsInAllFormats) {
  const Matrix I = Matrix::Identity(3, 3);
  for (MatrixFormat f : {MatrixFormat::matrix_market, MatrixFormat::csv, MatrixFormat::binary}) {
    const fs::path p = dir_ / ("I." + std::string(format_name(f)));
    write_matrix(I, p, f);
    EXPECT_TRUE(read_matrix(p, f) == I) << format_name(f);
  }
}

TEST_F(MatrixIoTest, RandomRoundTripPrecision) {
  Rng rng(RngSeed{9});
  const Matrix M = rng.normal_matrix(7, 5) * 1e3;
  write_matrix(M, dir_ / "m.bin", MatrixFormat::binary);
  EXPECT_TRUE(read_matrix(dir_ / "m.bin", MatrixFormat::binary) == M);
  for (MatrixFormat f : {MatrixFormat::matrix_market, MatrixFormat::csv}) {
    write_matrix(M, dir_ / "m.txt", f);
    const Matrix R = read_matrix(dir_ / "m.txt", f);
    ASSERT_EQ(R.rows(), 7);
    for (Index k = 0; k < M.size(); ++k) {
      EXPECT_NEAR(R.data()[k], M.data()[k], 1e-15 * std::abs(M.data()[k]));
    }
  }
}

TEST_F(MatrixIoTest, MatrixMarketFillsOmittedZeros) {
  const auto p = write_text("a.mtx",
                            "%%MatrixMarket matrix coordinate real general\n"
                            "% comment\n"
                            "3 2 2\n"
                            "1 1 2.5\n"
                            "3 2 -1\n");
  const Matrix M = read_matrix(p, MatrixFormat::matrix_market);
  Matrix expected = Matrix::Zero(3, 2);
  expected(0, 0) = 2.5;
  expected(2, 1) = -1;
  EXPECT_TRUE(M == expected);
}

TEST_F(MatrixIoTest, MalformedFilesNameTheLine) {
  const auto p = write_text("bad.mtx",
                            "%%MatrixMarket matrix coordinate real general\n"
                            "2 2 2\n"
                            "1 1 1.0\n"
                            "1 x 2.0\n");
  try {
    read_matrix(p, MatrixFormat::matrix_market);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 4u);
  }
  const auto c = write_text("bad.csv", "2,2\n1,2\n3\n");
  try {
    read_matrix(c, MatrixFormat::csv);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 3u);
  }
  const auto out_of_range = write_text("oob.mtx",
                                       "%%MatrixMarket matrix coordinate real general\n"
                                       "2 2 1\n"
                                       "3 1 1.0\n");
  EXPECT_THROW(read_matrix(out_of_range, MatrixFormat::matrix_market), ParseError);
}

TEST_F(MatrixIoTest, TruncatedBinaryReportsOffset) {
  const Matrix M = Matrix::Ones(4, 4);
  write_matrix(M, dir_ / "t.bin", MatrixFormat::binary);
  fs::resize_file(dir_ / "t.bin", 16 + 8 * 10);
  EXPECT_THROW(read_matrix(dir_ / "t.bin", MatrixFormat::binary), ParseError);
}

TEST_F(MatrixIoTest, NegativeEntriesRejectedWhenRequired) {
  Matrix M = Matrix::Ones(2, 2);
  M(0, 1) = -0.1;
  write_matrix(M, dir_ / "n.csv", MatrixFormat::csv);
  ReadOptions opts;
  opts.require_nonnegative = true;
  EXPECT_THROW(read_matrix(dir_ / "n.csv", MatrixFormat::csv, opts), ValidationError);
  EXPECT_NO_THROW(read_matrix(dir_ / "n.csv", MatrixFormat::csv));
}

TEST_F(MatrixIoTest, MissingFileIsIoError) {
  EXPECT_THROW(read_matrix(dir_ / "none.mtx", MatrixFormat::matrix_market), IoError);
  EXPECT_THROW(write_matrix(Matrix::Ones(1, 1), dir_ / "no" / "dir" / "x.csv", MatrixFormat::csv),
               IoError);
}

TEST_F(MatrixIoTest, FormatNamesAndExtensions) {
  EXPECT_EQ(parse_format("mtx"), MatrixFormat::matrix_market);
  EXPECT_EQ(parse_format("csv"), MatrixFormat::csv);
  EXPECT_EQ(parse_format("bin"), MatrixFormat::binary);
  EXPECT_THROW(parse_format("xlsx"), ValidationError);
  EXPECT_EQ(format_from_extension("a/b.mtx"), MatrixFormat::matrix_market);
  EXPECT_EQ(format_from_extension("x.bin"), MatrixFormat::binary);
}

TEST_F(MatrixIoTest, SparseStandInLoadsQuickly) {
  const Index n = 282, m = 1528;
  Rng rng(RngSeed{11});
  Matrix M = Matrix::Zero(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (rng.uniform() >= 0.973) M(i, j) = 1.0 + std::floor(rng.uniform() * 5.0);
    }
  }
  write_matrix(M, dir_ / "verb.mtx", MatrixFormat::matrix_market);
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix R = read_matrix(dir_ / "verb.mtx", MatrixFormat::matrix_market);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(R == M);
  EXPECT_LT(s, 1.0);
}
