#include "knfp/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

#include "knfp/util.hpp"

namespace knfp::fft {
namespace {

struct PlanKey {
  std::vector<int> shape;
  std::vector<int> axes;
  int sign;
  bool operator<(const PlanKey& o) const {
    if (shape != o.shape) return shape < o.shape;
    if (axes != o.axes) return axes < o.axes;
    return sign < o.sign;
  }
};

std::map<PlanKey, fftw_plan> g_plans;
std::mutex g_mutex;

fftw_plan get_plan(const PlanKey& key, fftw_complex* ptr) {
  std::lock_guard<std::mutex> lock(g_mutex);
  auto it = g_plans.find(key);
  if (it != g_plans.end()) return it->second;

  const int rank = static_cast<int>(key.shape.size());
  std::vector<ptrdiff_t> stride(rank, 1);
  for (int a = rank - 2; a >= 0; --a) stride[a] = stride[a + 1] * key.shape[a + 1];

  std::vector<bool> is_tr(rank, false);
  for (int a : key.axes) is_tr[a] = true;

  std::vector<fftw_iodim64> dims, howmany;
  for (int a = 0; a < rank; ++a) {
    fftw_iodim64 d{key.shape[a], stride[a], stride[a]};
    (is_tr[a] ? dims : howmany).push_back(d);
  }
  if (howmany.empty()) howmany.push_back({1, 1, 1});

  // FFTW_UNALIGNED lets the cached plan run on any caller buffer.
  fftw_plan p = fftw_plan_guru64_dft(
      static_cast<int>(dims.size()), dims.data(), static_cast<int>(howmany.size()),
      howmany.data(), ptr, ptr, key.sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  require(p != nullptr, "fft: plan creation failed");
  g_plans.emplace(key, p);
  return p;
}

}  // namespace

void transform(std::complex<double>* data, const std::vector<int>& shape,
               const std::vector<int>& axes, int sign) {
  require(sign == -1 || sign == 1, "fft: sign must be -1 or +1");
  require(!axes.empty(), "fft: no axes selected");
  for (int a : axes) require(a >= 0 && a < static_cast<int>(shape.size()), "fft: axis out of range");
  auto* ptr = reinterpret_cast<fftw_complex*>(data);
  fftw_plan p = get_plan({shape, axes, sign}, ptr);
  fftw_execute_dft(p, ptr, ptr);
}

}  // namespace knfp::fft
