#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fsv/diffcore/tensor.hpp"
#include "fsv/flow/frame.hpp"

namespace fsv::flow {

/// Native-frame indices kept when resampling `frame_count` frames from
/// native_fps to target_fps: round(i * native / target) for
/// i < floor(duration * target).
std::vector<std::size_t> sample_indices(std::size_t frame_count, double native_fps, double target_fps);

/// Throws TooShortError when fewer than min_frames frames survive.
std::vector<Frame> sample_frames(const std::vector<Frame>& frames, double native_fps, double target_fps,
                                 std::size_t min_frames = 5);

/// (anchor, anchor + 1) per anchor; an anchor on the last frame pairs with its predecessor.
std::vector<std::pair<std::size_t, std::size_t>> flow_pairs(std::size_t frame_count,
                                                            std::span<const std::size_t> anchors);

Frame to_gray(const Frame& frame);
Frame resize_bilinear(const Frame& frame, std::size_t side);
Frame resize_bilinear(const Frame& frame, std::size_t out_h, std::size_t out_w);

dc::Tensor standardize_rgb(const Frame& frame, const std::array<float, 3>& mean, const std::array<float, 3>& std);
Frame destandardize_rgb(const dc::Tensor& t, const std::array<float, 3>& mean, const std::array<float, 3>& std);

/// Clamp to [-clamp, clamp], rescale to [0, 1], standardize, then append a
/// standardized zero channel. Result is [3 x H x W].
dc::Tensor normalize_flow(const FlowField& flow, double clamp, const std::array<float, 3>& mean,
                          const std::array<float, 3>& std);

/// Stream tensors for one clip: rgb [T x 3 x S x S], flow [T' x 3 x S x S].
struct PreparedVideo {
    dc::Tensor rgb;
    dc::Tensor flow;
};

/// Full pipeline over native-rate frames. `seed` picks the anchor used by
/// single-frame stream choices; both streams share that anchor.
PreparedVideo prepare_video(const std::vector<Frame>& native_frames, const PreprocConfig& config,
                            std::uint64_t seed = 0, bool want_rgb = true, bool want_flow = true);

}  // namespace fsv::flow
