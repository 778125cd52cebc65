#pragma once

#include <cstdio>

namespace artgest::cli {

inline int run(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::printf("artgest: not wired up yet\n");
  return 2;
}

}  // namespace artgest::cli
