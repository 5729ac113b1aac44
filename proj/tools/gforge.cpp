// gforge: word arithmetic, splittings and graph-of-groups tooling over free
// products. Subcommands are filled in as the library grows; see --help.

#include <CLI11.hpp>

#include "gforge/word.hpp"

int main(int argc, char** argv) {
  CLI::App app{"free product toolkit"};
  app.require_subcommand(0, 1);
  CLI11_PARSE(app, argc, argv);
  return 0;
}
