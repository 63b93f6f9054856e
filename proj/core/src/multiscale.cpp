#include "sdm/multiscale.hpp"

#include <stdexcept>

namespace sdm {

namespace {

template <class Rep>
std::vector<Rep> split_parity(const std::vector<Rep>& in) {
  std::vector<Rep> out;
  out.reserve(in.size() * 4);
  for (const Rep& g : in) {
    if (g.height() % 2 != 0 || g.width() % 2 != 0)
      throw std::domain_error("reshape_down: dimensions must be even");
    const int h2 = g.height() / 2, w2 = g.width() / 2;
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) {
        Rep sub(h2, w2);
        for (int r = 0; r < h2; ++r)
          for (int c = 0; c < w2; ++c)
            sub.at(r, c) = g.at(2 * r + p, 2 * c + q);
        out.push_back(std::move(sub));
      }
  }
  return out;
}

template <class Rep>
std::vector<Rep> merge_parity(const std::vector<Rep>& in) {
  if (in.empty() || in.size() % 4 != 0)
    throw std::domain_error("reshape_up: list size must be a positive multiple of 4");
  std::vector<Rep> out;
  out.reserve(in.size() / 4);
  for (std::size_t base = 0; base < in.size(); base += 4) {
    const int h2 = in[base].height(), w2 = in[base].width();
    for (int i = 1; i < 4; ++i)
      if (in[base + i].height() != h2 || in[base + i].width() != w2)
        throw std::domain_error("reshape_up: slices in a group must share one shape");
    Rep full(2 * h2, 2 * w2);
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) {
        const Rep& sub = in[base + 2 * p + q];
        for (int r = 0; r < h2; ++r)
          for (int c = 0; c < w2; ++c)
            full.at(2 * r + p, 2 * c + q) = sub.at(r, c);
      }
    out.push_back(std::move(full));
  }
  return out;
}

}  // namespace

std::vector<Grid> reshape_down(const std::vector<Grid>& grids) {
  return split_parity(grids);
}

std::vector<FragmentBuffer> reshape_down(const std::vector<FragmentBuffer>& bufs) {
  return split_parity(bufs);
}

std::vector<Grid> reshape_up(const std::vector<Grid>& grids) {
  return merge_parity(grids);
}

std::vector<FragmentBuffer> reshape_up(const std::vector<FragmentBuffer>& bufs) {
  return merge_parity(bufs);
}

Grid zoomed_target(const std::vector<Grid>& masks) {
  if (masks.empty())
    throw std::invalid_argument("zoomed_target: need at least one mask");
  const int h = masks[0].height(), w = masks[0].width();
  Grid out(h, w);
  for (const Grid& m : masks) {
    if (m.height() != h || m.width() != w)
      throw std::invalid_argument("zoomed_target: masks must share one shape");
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (m.at(r, c) != 0.0) out.at(r, c) = 1.0;
  }
  return out;
}

Intrinsics level_intrinsics(const Intrinsics& k, int level) {
  if (level < 0) throw std::invalid_argument("level_intrinsics: level must be non-negative");
  const int div = 1 << level;
  if (k.height % div != 0 || k.width % div != 0)
    throw std::invalid_argument("level_intrinsics: screen dims must divide by 2^level");
  Intrinsics out = k;
  out.fu /= div;
  out.fv /= div;
  out.ou /= div;
  out.ov /= div;
  out.height /= div;
  out.width /= div;
  return out;
}

PipelineResult sdm_pipeline(const FragmentBuffer& buf, const Grid& target_mask,
                            const Intrinsics& k, const PyramidOptions& opts) {
  opts.validate();
  k.validate();
  if (buf.height() != k.height || buf.width() != k.width)
    throw std::invalid_argument("sdm_pipeline: buffer shape differs from intrinsics");
  if (target_mask.height() != k.height || target_mask.width() != k.width)
    throw std::invalid_argument("sdm_pipeline: target shape differs from intrinsics");
  const int div = 1 << opts.s;
  if (k.height % div != 0 || k.width % div != 0)
    throw std::invalid_argument("sdm_pipeline: screen dims must divide by 2^s");

  // Down phase: parity-split targets and buffers s times, caching each
  // level's zoomed target.
  std::vector<Grid> zoomed(static_cast<std::size_t>(opts.s) + 1);
  {
    std::vector<Grid> targets{target_mask};
    zoomed[0] = zoomed_target(targets);
    for (int level = 1; level <= opts.s; ++level) {
      targets = reshape_down(targets);
      zoomed[level] = zoomed_target(targets);
    }
  }
  std::vector<FragmentBuffer> bufs{buf};
  for (int level = 1; level <= opts.s; ++level) bufs = reshape_down(bufs);

  // Up phase: solve every level, feeding each level's outputs upward.
  PipelineResult res;
  res.final_level = opts.zoom;
  for (int level = opts.s;; --level) {
    const Intrinsics kl = level_intrinsics(k, level);
    double level_sum = 0.0;
    std::vector<FragmentBuffer> next;
    next.reserve(bufs.size());
    for (const FragmentBuffer& sub : bufs) {
      SdmPassResult pass = sdm_pass(sub, zoomed[level], kl, opts.sdm);
      level_sum += pass.loss.loss;
      res.gx += pass.loss.grad.gx;
      res.gy += pass.loss.grad.gy;
      res.noise_gx += pass.loss.grad.noise_gx;
      res.noise_gy += pass.loss.grad.noise_gy;
      next.push_back(std::move(pass.forward.buffer));
    }
    res.loss += level_sum;
    res.level_loss.push_back(level_sum);
    if (level == opts.zoom) {
      res.final_buffers = std::move(next);
      break;
    }
    bufs = reshape_up(next);
  }

  res.final_zoomed_target = zoomed[opts.zoom];
  res.mask_match = true;
  for (const FragmentBuffer& sub : res.final_buffers) {
    for (int r = 0; r < sub.height() && res.mask_match; ++r)
      for (int c = 0; c < sub.width(); ++c)
        if (sub.at(r, c).active && res.final_zoomed_target.at(r, c) == 0.0) {
          res.mask_match = false;
          break;
        }
    if (!res.mask_match) break;
  }
  return res;
}

}  // namespace sdm
