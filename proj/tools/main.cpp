#include <atomic>
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  std::vector<std::string> args(argv + 1, argv + argc);
  const int code = ctxcal::cli::run(args, std::cout, std::cerr, &g_cancel);
  if (g_cancel.load() && code == ctxcal::cli::kOk) return ctxcal::cli::kInterrupted;
  return code;
}
