#pragma once

// Shared reporting for the acceptance suites: every criterion prints one
// PASS/FAIL line; a suite's exit code is its failure count.

#include <cstdio>
#include <string>

namespace acceptance {

inline int g_failures = 0;

inline void report(const std::string& name, bool pass, const std::string& details) {
  std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), details.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

inline int exit_code() { return g_failures; }

}  // namespace acceptance
