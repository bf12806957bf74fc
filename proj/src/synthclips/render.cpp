#include <algorithm>
#include <cmath>

#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"
#include "tfz/synthclips/synthclips.hpp"

namespace tfz {

namespace {

// Shape codes shared by MO options and the sprite painter.
enum Shape2D : std::size_t { kRect = 0, kCross = 1, kDisc = 2, kBar = 3 };

struct Canvas {
  Tensor px;
  std::size_t F, C, H, W;

  explicit Canvas(const GenConfig& g)
      : px({g.frames, g.channels, g.height, g.width}), F(g.frames), C(g.channels), H(g.height), W(g.width) {}

  void set(std::size_t f, std::size_t x, std::size_t y, double v) {
    for (std::size_t c = 0; c < C; ++c) px[((f * C + c) * H + y) * W + x] = v;
  }

  // Box with top-left (x0, y0); the whole box must lie on the canvas.
  void check_box(long x0, long y0, long w, long h) const {
    if (x0 < 0 || y0 < 0 || x0 + w > static_cast<long>(W) || y0 + h > static_cast<long>(H)) {
      throw Error(ErrorKind::BadConfig, "sprite box (" + std::to_string(x0) + "," + std::to_string(y0) + ") " +
                                            std::to_string(w) + "x" + std::to_string(h) + " leaves the canvas");
    }
  }

  void box(std::size_t f, long x0, long y0, long w, long h) {
    check_box(x0, y0, w, h);
    for (long y = y0; y < y0 + h; ++y) {
      for (long x = x0; x < x0 + w; ++x) set(f, static_cast<std::size_t>(x), static_cast<std::size_t>(y), 1.0);
    }
  }

  // Sprite of side s centred on (cx, cy): covers [cx - s/2, cx - s/2 + s).
  void sprite(std::size_t f, std::size_t shape, long cx, long cy, long s) {
    const long x0 = cx - s / 2, y0 = cy - s / 2;
    check_box(x0, y0, s, s);
    const double r = static_cast<double>(s) / 2.0;
    for (long dy = 0; dy < s; ++dy) {
      for (long dx = 0; dx < s; ++dx) {
        const bool mid_x = dx >= s / 2 - 1 && dx < s / 2 + 1, mid_y = dy >= s / 2 - 1 && dy < s / 2 + 1;
        const double ex = dx + 0.5 - r, ey = dy + 0.5 - r;
        bool on = false;
        switch (shape) {
          case kRect: on = true; break;
          case kCross: on = mid_x || mid_y; break;
          case kDisc: on = ex * ex + ey * ey <= r * r; break;
          case kBar: on = mid_y; break;
          default: throw Error(ErrorKind::BadConfig, "unknown shape code " + std::to_string(shape));
        }
        if (on) set(f, static_cast<std::size_t>(x0 + dx), static_cast<std::size_t>(y0 + dy), 1.0);
      }
    }
  }
};

constexpr long kDirX[4] = {-1, 1, 0, 0};
constexpr long kDirY[4] = {0, 0, -1, 1};

// Linear travel from 0 to `total` across `frames` frames.
long travel(long total, std::size_t f, std::size_t frames) {
  if (frames <= 1) return total;
  return std::lround(static_cast<double>(total) * static_cast<double>(f) / static_cast<double>(frames - 1));
}

void render_mr(Canvas& cv, const SampleScript& s) {
  const long cx = static_cast<long>(cv.W / 2) + s.jitter_x, cy = static_cast<long>(cv.H / 2) + s.jitter_y;
  for (std::size_t f = 0; f < cv.F; ++f) {
    const long q = static_cast<long>(4 * f / cv.F);
    long len = 8, thick = 2, x = cx;
    bool vertical = false, visible = true;
    switch (s.truth) {
      case 0: x = cx + 2 * q; break;
      case 1: vertical = q % 2 == 1; break;
      case 2: visible = q % 2 == 0; break;
      case 3: len = 8 + 4 * q; break;
    }
    if (!visible) continue;
    if (vertical) {
      cv.box(f, x - thick / 2, cy - len / 2, thick, len);
    } else {
      cv.box(f, x - len / 2, cy - thick / 2, len, thick);
    }
  }
}

void render_lm(Canvas& cv, const SampleScript& s, long sprite) {
  if (s.displacement == 0) throw Error(ErrorKind::BadConfig, "location script without displacement");
  const long cx = static_cast<long>(cv.W / 2) + s.jitter_x, cy = static_cast<long>(cv.H / 2) + s.jitter_y;
  for (std::size_t f = 0; f < cv.F; ++f) {
    const long d = travel(s.displacement, f, cv.F);
    cv.sprite(f, kRect, cx + kDirX[s.truth] * d, cy + kDirY[s.truth] * d, sprite);
  }
}

void render_cm(Canvas& cv, const SampleScript& s) {
  // The window pans one pixel per frame over a blocky scene with a margin of F
  // pixels on each side, so frame t is frame 0 shifted by t pixels.
  constexpr std::size_t kBlock = 4;
  const std::size_t SW = cv.W + 2 * cv.F, SH = cv.H + 2 * cv.F;
  const std::size_t bw = (SW + kBlock - 1) / kBlock, bh = (SH + kBlock - 1) / kBlock;
  std::vector<double> blocks(bw * bh * cv.C);
  Rng rng(s.texture_seed);
  for (double& b : blocks) b = static_cast<double>(rng.below(17)) / 16.0;
  for (std::size_t f = 0; f < cv.F; ++f) {
    const long ox = static_cast<long>(cv.F) + kDirX[s.truth] * static_cast<long>(f);
    const long oy = static_cast<long>(cv.F) + kDirY[s.truth] * static_cast<long>(f);
    for (std::size_t c = 0; c < cv.C; ++c) {
      for (std::size_t y = 0; y < cv.H; ++y) {
        for (std::size_t x = 0; x < cv.W; ++x) {
          const auto sx = static_cast<std::size_t>(ox + static_cast<long>(x)), sy = static_cast<std::size_t>(oy + static_cast<long>(y));
          cv.px[((f * cv.C + c) * cv.H + y) * cv.W + x] = blocks[((sy / kBlock) * bw + sx / kBlock) * cv.C + c];
        }
      }
    }
  }
}

void render_mo(Canvas& cv, const SampleScript& s, long sprite) {
  const long qw = static_cast<long>(cv.W / 2), qh = static_cast<long>(cv.H / 2);
  std::size_t movers = 0;
  for (std::size_t q = 0; q < 4; ++q) movers += s.layout[q] == s.truth;
  if (movers != 1) throw Error(ErrorKind::BadConfig, "moving shape must appear exactly once");
  for (std::size_t f = 0; f < cv.F; ++f) {
    for (std::size_t q = 0; q < 4; ++q) {
      long cx = static_cast<long>(q % 2) * qw + qw / 2, cy = static_cast<long>(q / 2) * qh + qh / 2;
      if (s.layout[q] == s.truth) {
        const long d = travel(s.displacement, f, cv.F);
        cx += kDirX[s.direction] * d;
        cy += kDirY[s.direction] * d;
      }
      cv.sprite(f, s.layout[q], cx, cy, sprite);
    }
  }
}

void render_ao(Canvas& cv, const SampleScript& s, long sprite) {
  if (s.truth > 1) throw Error(ErrorKind::BadConfig, "action order truth must be an ordering");
  const std::size_t half = cv.F / 2;
  if (half < 2) throw Error(ErrorKind::BadConfig, "action order needs at least 4 frames");
  const std::size_t blink_start = s.truth == 0 ? 0 : half, move_start = s.truth == 0 ? half : 0;
  const long qw = static_cast<long>(cv.W / 4), cy = static_cast<long>(cv.H / 2) + s.jitter_y;
  const long travel_px = static_cast<long>(cv.H / 2) - sprite;
  for (std::size_t f = 0; f < cv.F; ++f) {
    const bool hidden = f >= blink_start + half / 2 && f < blink_start + half;
    if (!hidden) cv.sprite(f, kDisc, qw, cy, sprite);
    long d = 0;
    if (f >= move_start + half) {
      d = travel_px;
    } else if (f >= move_start) {
      d = travel(travel_px, f - move_start, half);
    }
    cv.sprite(f, kRect, 3 * qw, cy - travel_px / 2 + d, sprite);
  }
}

void render_rc(Canvas& cv, const SampleScript& s, long sprite) {
  const std::size_t r = s.truth + 1;
  if (cv.F < 2 * r) {
    throw Error(ErrorKind::BadConfig, std::to_string(r) + " repetitions need at least " + std::to_string(2 * r) + " frames");
  }
  const std::size_t period = cv.F / r, on = (period + 1) / 2;
  const long cx = static_cast<long>(cv.W / 2) + s.jitter_x, cy = static_cast<long>(cv.H / 2) + s.jitter_y;
  for (std::size_t f = 0; f < r * period; ++f) {
    if (f % period < on) cv.sprite(f, kDisc, cx, cy, sprite);
  }
}

bool static_clip(const Tensor& px, std::size_t frames) {
  const std::size_t n = px.size() / frames;
  for (std::size_t f = 1; f < frames; ++f) {
    if (!std::equal(px.ptr(), px.ptr() + n, px.ptr() + f * n)) return false;
  }
  return true;
}

}  // namespace

std::size_t SampleScript::answer_idx() const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (options[i] == truth) return i;
  }
  throw Error(ErrorKind::BadConfig, "truth missing from options");
}

SampleScript draw_script(TaskCategory category, std::uint64_t seed, const GenConfig& gcfg) {
  gcfg.validate();
  Rng rng(seed);
  SampleScript s;
  s.category = category;
  const std::size_t n_values = category_values(category).size();
  std::vector<std::size_t> pool;
  switch (category) {
    case TaskCategory::AO: s.truth = rng.below(2); break;
    case TaskCategory::RC: s.truth = rng.below(6); break;
    default: s.truth = rng.below(n_values); break;
  }
  for (std::size_t v = 0; v < n_values; ++v) {
    if (v != s.truth) pool.push_back(v);
  }
  rng.shuffle(pool.begin(), pool.end());
  const std::size_t answer = rng.below(4);
  for (std::size_t i = 0, next = 0; i < 4; ++i) s.options[i] = i == answer ? s.truth : pool[next++];

  const int jitter = category == TaskCategory::LM ? 1 : 3;
  s.jitter_x = static_cast<int>(rng.below(2 * jitter + 1)) - jitter;
  s.jitter_y = static_cast<int>(rng.below(2 * jitter + 1)) - jitter;
  s.displacement = category == TaskCategory::MO ? 4 : gcfg.lm_displacement;
  s.direction = rng.below(4);
  s.layout = {kRect, kCross, kDisc, kBar};
  rng.shuffle(s.layout.begin(), s.layout.end());
  s.texture_seed = rng.next_u64();
  return s;
}

SyntheticSample render_sample(const SampleScript& script, const GenConfig& gcfg, std::uint64_t seed) {
  gcfg.validate();
  const auto& values = category_values(script.category);
  for (std::size_t i = 0; i < 4; ++i) {
    if (script.options[i] >= values.size()) throw Error(ErrorKind::BadConfig, "option value out of range");
    for (std::size_t j = 0; j < i; ++j) {
      if (script.options[i] == script.options[j]) throw Error(ErrorKind::BadConfig, "options must be pairwise distinct");
    }
  }
  const std::size_t answer = script.answer_idx();
  const long sprite = static_cast<long>(gcfg.sprite);
  if (gcfg.sprite > gcfg.width / 2 || gcfg.sprite > gcfg.height / 2) {
    throw Error(ErrorKind::BadConfig, "sprite " + std::to_string(gcfg.sprite) + " larger than a canvas quadrant");
  }
  Canvas cv(gcfg);
  switch (script.category) {
    case TaskCategory::MR: render_mr(cv, script); break;
    case TaskCategory::LM: render_lm(cv, script, sprite); break;
    case TaskCategory::CM: render_cm(cv, script); break;
    case TaskCategory::MO: render_mo(cv, script, sprite); break;
    case TaskCategory::AO: render_ao(cv, script, sprite); break;
    case TaskCategory::RC: render_rc(cv, script, sprite); break;
  }
  if (static_clip(cv.px, cv.F)) throw Error(ErrorKind::BadConfig, "clip is static; answerable from its first frame");

  SyntheticSample out;
  out.clip = VideoClip(std::move(cv.px));
  out.category = script.category;
  out.seed = seed;
  for (std::size_t i = 0; i < 4; ++i) out.options[i] = values[script.options[i]];
  out.answer_idx = answer;
  out.question_ids = question_tokens(script.category, script.options);
  out.truth = values[script.truth];
  return out;
}

SyntheticSample gen_sample(TaskCategory category, std::uint64_t seed, const GenConfig& gcfg) {
  return render_sample(draw_script(category, seed, gcfg), gcfg, seed);
}

}  // namespace tfz
