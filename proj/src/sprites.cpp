#include "translution/sprites.hpp"

#include <cmath>
#include <filesystem>

namespace translution {

namespace {

constexpr std::size_t kSide = 28;

struct Style {
  double cx, cy;     // glyph center
  double spread;     // arrangement half-extent
  double radius;     // disc radius
  double intensity;
};

double sq(double v) { return v * v; }

// Class identity lives in the relative arrangement of shared primitives
// (discs and one bar), the way digit classes share strokes: a bag of local
// patches rarely separates classes, their layout does.
double coverage(std::size_t cls, double x, double y, const Style& s) {
  const double dx = x - s.cx;
  const double dy = y - s.cy;
  const double sp = s.spread;
  const double r = s.radius;
  auto disc = [&](double px, double py) {
    return sq(dx - px) + sq(dy - py) <= sq(r) ? 1.0 : 0.0;
  };
  auto bar = [&](double px, double py) {  // short horizontal bar
    return (std::abs(dx - px) <= r * 0.6 && std::abs(dy - py) <= sp) ? 1.0 : 0.0;
  };
  switch (cls) {
    case 0:  // diagonal disc pair
      return std::max(disc(-sp, -sp), disc(sp, sp));
    case 1:  // anti-diagonal disc pair
      return std::max(disc(-sp, sp), disc(sp, -sp));
    case 2:  // stacked disc pair
      return std::max(disc(-sp, 0), disc(sp, 0));
    case 3:  // side-by-side disc pair
      return std::max(disc(0, -sp), disc(0, sp));
    case 4:  // vertical disc triple
      return std::max({disc(-sp, 0), disc(0, 0), disc(sp, 0)});
    case 5:  // horizontal disc triple
      return std::max({disc(0, -sp), disc(0, 0), disc(0, sp)});
    case 6:  // L of three discs
      return std::max({disc(-sp, -sp), disc(sp, -sp), disc(sp, sp)});
    case 7:  // disc above the bar
      return std::max(disc(-sp, 0), bar(sp * 0.6, 0));
    case 8:  // disc below the bar
      return std::max(disc(sp, 0), bar(-sp * 0.6, 0));
    case 9:  // square of four discs
      return std::max({disc(-sp, -sp), disc(-sp, sp), disc(sp, -sp), disc(sp, sp)});
  }
  return 0.0;
}

}  // namespace

IdxImages make_sprites(std::size_t count, std::uint64_t seed) {
  IdxImages out;
  out.images = Tensor<float>::zeros({count, kSide, kSide});
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed ^ (0x5B17E5ULL * (i + 1)));
    const std::size_t cls = static_cast<std::size_t>(rng.below(10));
    out.labels[i] = static_cast<std::int64_t>(cls);
    Style s;
    s.cx = 13.5 + (rng.uniform() - 0.5) * 3.0;
    s.cy = 13.5 + (rng.uniform() - 0.5) * 3.0;
    s.spread = 8.0 + rng.uniform() * 2.0;
    s.radius = 4.0 + rng.uniform() * 1.0;
    s.intensity = 0.7 + rng.uniform() * 0.3;
    float* img = out.images.data() + i * kSide * kSide;
    for (std::size_t x = 0; x < kSide; ++x)
      for (std::size_t y = 0; y < kSide; ++y) {
        // 2x2 supersampling softens edges like pen strokes
        double acc = 0;
        for (double ox : {0.25, 0.75})
          for (double oy : {0.25, 0.75})
            acc += coverage(cls, static_cast<double>(x) + ox, static_cast<double>(y) + oy, s);
        double v = s.intensity * acc / 4.0;
        if (v > 0) v = std::min(1.0, v + (rng.uniform() - 0.5) * 0.1);
        img[x * kSide + y] = static_cast<float>(v);
      }
  }
  return out;
}

void write_sprite_idx(const std::string& dir, std::size_t train_count, std::size_t test_count,
                      std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  IdxImages train = make_sprites(train_count, seed);
  IdxImages test = make_sprites(test_count, seed ^ 0x7E57ULL);
  write_idx_images(dir + "/train-images-idx3-ubyte", train.images);
  write_idx_labels(dir + "/train-labels-idx1-ubyte", train.labels);
  write_idx_images(dir + "/t10k-images-idx3-ubyte", test.images);
  write_idx_labels(dir + "/t10k-labels-idx1-ubyte", test.labels);
}

}  // namespace translution
