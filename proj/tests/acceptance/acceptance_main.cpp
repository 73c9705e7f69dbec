// Acceptance harness: runs the numbered criteria and prints one pass/fail
// line per criterion. Exit status is the number of failed criteria.

#include <cstring>
#include <iostream>

#include "criteria.hpp"

int main(int argc, char** argv) {
  int selected = 0;
  for (int a = 1; a < argc; ++a) {
    if (std::strcmp(argv[a], "--criterion") == 0 && a + 1 < argc)
      selected = std::atoi(argv[++a]);
  }

  int failures = 0;
  for (const auto& crit : acceptance::all_criteria()) {
    if (selected != 0 && crit.id != selected) continue;
    bool ok = false;
    try {
      ok = crit.run(std::cout);
    } catch (const std::exception& e) {
      std::cout << "  exception: " << e.what() << '\n';
    }
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << crit.id << ": " << crit.name
              << std::endl;
    failures += !ok;
  }
  return failures;
}
