#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssmnd/json_fields.hpp"
#include "ssmnd/ndarray.hpp"

namespace ssmnd {

/// Synthetic classification tasks whose solution needs a particular direction
/// of information flow.
///   causal-trap-2d       binary (H, W, 1) grid; label = bottom-right cell
///   cross-parity-2d      (H, W, 2): channel 0 random bits, channel 1 one marker;
///                        label = parity of the bits sharing the marker's row or
///                        column (marker cell excluded)
///   temporal-pointer-3d  (T, H, W, 2): each frame lights one of four quadrants in
///                        channel 0; channel 1 marks one frame at its centre;
///                        label = quadrant lit in the marked frame
enum class TaskKind { CausalTrap2D, CrossParity2D, TemporalPointer3D };

std::string to_string(TaskKind k);
TaskKind parse_task(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::CausalTrap2D;
  Shape grid;  // spatial extents; empty means the task default
  std::uint64_t seed = 0;

  Shape spatial() const;
  Shape input_shape() const;
  std::size_t n_classes() const;
};

/// Default spatial extents: 6x6, 8x8 and 4x6x6.
Shape default_grid(TaskKind k);

struct Dataset {
  Shape input_shape;
  std::size_t n_classes = 0;
  std::vector<NdArray> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return inputs.size(); }
};

/// Deterministic in (spec, n, stream). Labels cycle through the classes before
/// a seeded shuffle, so class counts differ by at most one.
Dataset generate(const TaskSpec& spec, std::size_t n, std::uint64_t stream = 0);

Json to_json(const TaskSpec& spec);
TaskSpec task_from_json(const Json& j, const std::string& path = "task");

}  // namespace ssmnd
