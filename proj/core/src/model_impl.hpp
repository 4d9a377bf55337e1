// Copyright 2026 The Stackprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared internals of the model zoo: binary blob codec, standardization and
// the per-family training/loading entry points.

#ifndef STACKPROP_SRC_MODEL_IMPL_HPP_
#define STACKPROP_SRC_MODEL_IMPL_HPP_

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stackprop/error.hpp"
#include "stackprop/models.hpp"

namespace stackprop {

class BlobWriter {
 public:
  void U8(std::uint8_t v) { bytes_.push_back(v); }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void String(const std::string& s) {
    U64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void Doubles(std::span<const double> values) {
    U64(values.size());
    for (double v : values) F64(v);
  }
  void Dense(const Matrix& m) {
    U64(static_cast<std::uint64_t>(m.rows()));
    U64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) F64(m(i, j));
    }
  }
  void DenseVector(const Vector& v) { Doubles({v.data(), static_cast<std::size_t>(v.size())}); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t U8() {
    Need(1);
    return bytes_[pos_++];
  }
  std::uint32_t U32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t U64() {
    Need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double F64() { return std::bit_cast<double>(U64()); }
  std::string String() {
    const std::uint64_t n = U64();
    Need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> Doubles() {
    const std::uint64_t n = U64();
    Need(n * 8);
    std::vector<double> out(n);
    for (auto& v : out) v = F64();
    return out;
  }
  Matrix Dense() {
    const std::uint64_t rows = U64();
    const std::uint64_t cols = U64();
    Need(rows * cols * 8);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = F64();
    }
    return m;
  }
  Vector DenseVector() {
    const auto values = Doubles();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::uint64_t n) const {
    Require(n <= bytes_.size() - pos_, ErrorKind::kParse, "truncated model blob");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Column-wise affine map x -> (x - mean) / scale; zero-variance columns keep
// scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer Fit(const Matrix& x);
  static Standardizer Identity(Eigen::Index width);
  Matrix Apply(const Matrix& x) const;
  void Write(BlobWriter& out) const;
  static Standardizer Read(BlobReader& in);
};

// Row-wise softmax, numerically stabilized.
Matrix Softmax(const Matrix& logits);

// Mean of -log p[true class], probabilities clamped to [1e-15, 1].
double LogLoss(const Matrix& probabilities, const Targets& y);
double MeanSquaredError(const Matrix& predictions, const Matrix& targets);

// Family entry points. Train* receive validated specs and non-degenerate
// targets.
std::unique_ptr<TrainedModel> TrainConstant(const ModelSpec& spec, const Matrix& x, const Targets& y);
std::unique_ptr<TrainedModel> TrainRidge(const ModelSpec& spec, const Matrix& x, const Targets& y);
std::unique_ptr<TrainedModel> TrainLogistic(const ModelSpec& spec, const Matrix& x, const Targets& y);
std::unique_ptr<TrainedModel> TrainKnn(const ModelSpec& spec, const Matrix& x, const Targets& y);
std::unique_ptr<TrainedModel> TrainGbdt(const ModelSpec& spec, const Matrix& x, const Targets& y);
std::unique_ptr<TrainedModel> TrainMlp(const ModelSpec& spec, const Matrix& x, const Targets& y);

std::unique_ptr<TrainedModel> ReadConstant(BlobReader& in);
std::unique_ptr<TrainedModel> ReadRidge(BlobReader& in);
std::unique_ptr<TrainedModel> ReadLogistic(BlobReader& in);
std::unique_ptr<TrainedModel> ReadKnn(BlobReader& in);
std::unique_ptr<TrainedModel> ReadGbdt(BlobReader& in);
std::unique_ptr<TrainedModel> ReadMlp(BlobReader& in);

}  // namespace stackprop

#endif  // STACKPROP_SRC_MODEL_IMPL_HPP_
