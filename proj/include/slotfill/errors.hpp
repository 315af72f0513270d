// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace slotfill {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corpus / data errors.
struct InvalidSchema : Error { using Error::Error; };
struct SchemaMismatch : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };

// Sampler errors.
struct EmptyPool : Error { using Error::Error; };

// Layer / model errors.
struct ShapeError : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct EmptyExamples : Error { using Error::Error; };
struct EmptyDescription : Error { using Error::Error; };
struct InvalidToken : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };

// Configuration / CLI errors.
struct ConfigError : Error { using Error::Error; };

inline void log_warn(const std::string& msg) {
  std::cerr << "[slotfill] warning: " << msg << "\n";
}

}  // namespace slotfill
