#pragma once

namespace ratfm {

/// Keeps large freed blocks in the heap instead of returning them to the OS. Training
/// allocates and frees many multi-megabyte buffers per step.
void tune_allocator();

}  // namespace ratfm
