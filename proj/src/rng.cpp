#include "posoc/rng.hpp"

namespace posoc {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(parent + kGolden) ^ mix64(a * kGolden + 0x632BE59BD9B4E019ULL) ^
               (b * 0xD1B54A32D192ED03ULL));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t lane)
    : seed_(seed), stream_id_(stream_id), lane_(lane) {
  state_ = mix64(mix64(seed ^ 0xA0761D6478BD642FULL) + mix64(stream_id + kGolden) +
                 lane * 0xE7037ED1A0B428DBULL);
}

RngStream::result_type RngStream::operator()() {
  state_ += kGolden;
  return mix64(state_);
}

double RngStream::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RngStream::normal() { return gauss_(*this); }

void RngStream::normals(Vector& out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = gauss_(*this);
}

}  // namespace posoc
