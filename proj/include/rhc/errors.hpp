#pragma once

#include <stdexcept>
#include <string>

namespace rhc {

// A statistic or transform is undefined on the given data (e.g. WCSS = 0).
struct degenerate_data_error : std::runtime_error {
  explicit degenerate_data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical routine could not meet its accuracy contract.
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File or schema problem while reading external data.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rhc
