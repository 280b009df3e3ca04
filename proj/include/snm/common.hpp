// Error types and small shared utilities.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace snm {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parameter_error : error {
  using error::error;
};
struct dimension_error : error {
  using error::error;
};
struct io_error : error {
  using error::error;
};
struct format_error : error {
  using error::error;
};
struct config_error : error {
  using error::error;
};
struct label_error : error {
  using error::error;
};
struct undefined_metric_error : error {
  using error::error;
};
struct divergence_error : error {
  using error::error;
};

// Tissue classes: background, gray matter, white matter, CSF.
inline constexpr int kNumClasses = 4;

}  // namespace snm
