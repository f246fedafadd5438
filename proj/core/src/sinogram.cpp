#include "tomofuse/sinogram.hpp"

#include <algorithm>

namespace tomofuse {

Sinogram::Sinogram(const AcquisitionParams& params, float fill)
    : Sinogram(params, IndexRange{0, params.n_proj}, IndexRange{0, params.n_rows}, fill) {}

Sinogram::Sinogram(const AcquisitionParams& params, IndexRange angles, IndexRange rows, float fill)
    : params_(params), angles_(angles), rows_(rows) {
  params_.validate();
  require(angles.begin >= 0 && angles.end <= params.n_proj && angles.begin <= angles.end,
          "sinogram angle range out of bounds");
  require(rows.begin >= 0 && rows.end <= params.n_rows && rows.begin <= rows.end, "sinogram row range out of bounds");
  samples_.assign(static_cast<std::size_t>(angles.size()) * static_cast<std::size_t>(rows.size()) *
                      static_cast<std::size_t>(params.n_chan),
                  fill);
}

bool Sinogram::is_full() const {
  return angles_ == IndexRange{0, params_.n_proj} && rows_ == IndexRange{0, params_.n_rows};
}

Sinogram Sinogram::block(IndexRange angles, IndexRange rows) const {
  require(angles.begin >= angles_.begin && angles.end <= angles_.end && angles.begin <= angles.end,
          "block angle range outside source");
  require(rows.begin >= rows_.begin && rows.end <= rows_.end && rows.begin <= rows.end,
          "block row range outside source");
  Sinogram out(params_, angles, rows);
  for (int k = angles.begin; k < angles.end; ++k) {
    for (int r = rows.begin; r < rows.end; ++r) {
      const auto src = line(k, r);
      std::copy(src.begin(), src.end(), out.line(k, r).begin());
    }
  }
  return out;
}

}  // namespace tomofuse
