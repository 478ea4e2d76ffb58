// Reference sensor plugin speaking the stdio protocol.
//
//   mosden-sim-plugin [--id <plugin_id>]

#include <iostream>
#include <string>

#include "mosden/sim.hpp"

int main(int argc, char** argv) {
  std::string id(mosden::kSimPluginId);
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--id") id = argv[++i];
  }
  std::ios::sync_with_stdio(false);
  mosden::SimPlugin plugin;
  return mosden::serve_stdio(plugin, id, mosden::kSimPluginVersion, std::cin, std::cout);
}
