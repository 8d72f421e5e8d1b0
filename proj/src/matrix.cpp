// Copyright 2026 The fna Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fna/matrix.h"

#include "fna/ops.h"
#include "fna/tensor.h"

namespace fna {

Matrix resize_bilinear(const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows == rows && m.cols == cols) return m;
  NoGradGuard no_grad;
  auto t = Tensor<float>::from(Shape{1, m.rows, m.cols}, m.data);
  auto r = ops::bilinear_resize(t, rows, cols);
  Matrix out(rows, cols);
  std::copy(r.data().begin(), r.data().end(), out.data.begin());
  return out;
}

}  // namespace fna
