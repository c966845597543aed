#include "pnradar/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace pnradar::fftutil {

namespace {

// FFTW plan creation is not thread-safe; execution via the new-array API is.
// FFTW_UNALIGNED lets one plan serve arbitrary caller buffers.
class PlanCache {
public:
    fftw_plan get(int n, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        fftw_complex* buf = fftw_alloc_complex(static_cast<size_t>(n));
        fftw_complex* out = fftw_alloc_complex(static_cast<size_t>(n));
        fftw_plan plan = fftw_plan_dft_1d(n, buf, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        fftw_free(out);
        if (!plan) throw std::runtime_error("fftw plan creation failed");
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
    static PlanCache instance;
    return instance;
}

}  // namespace

void transform(std::span<const std::complex<double>> in, std::span<std::complex<double>> out,
               int sign) {
    if (in.size() != out.size()) throw std::invalid_argument("fft: size mismatch");
    if (in.empty()) return;
    if (in.data() == out.data()) throw std::invalid_argument("fft: in-place not supported");
    const int n = static_cast<int>(in.size());
    fftw_plan plan = cache().get(n, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD);
    auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data()));
    auto* dst = reinterpret_cast<fftw_complex*>(out.data());
    fftw_execute_dft(plan, src, dst);
}

}  // namespace pnradar::fftutil
