#pragma once

#include <stdexcept>

namespace qgemm {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or divisibility constraint violated (k % 8, n % 8, k % g, tile mismatch).
struct ShapeError : Error {
  using Error::Error;
};

// A 4-bit code or zero point outside [0, 15].
struct RangeError : Error {
  using Error::Error;
};

// perm is not a permutation of 0..k-1.
struct PermError : Error {
  using Error::Error;
};

// Row/column index outside the container.
struct IndexError : Error {
  using Error::Error;
};

// Malformed weight file or config: bad magic, bad version, truncation.
struct FormatError : Error {
  using Error::Error;
};

namespace sim {

// Memory access outside a global or shared buffer.
struct OutOfBounds : Error {
  using Error::Error;
};

// Half2 access at an odd element offset.
struct Misaligned : Error {
  using Error::Error;
};

// Not all threads of a block reached the same barrier.
struct BarrierDivergence : Error {
  using Error::Error;
};

// Kernel requested more shared memory than the per-block cap.
struct SharedOverflow : Error {
  using Error::Error;
};

}  // namespace sim

}  // namespace qgemm
