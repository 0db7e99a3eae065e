#include "hedgegame/cli.hpp"

int main(int argc, char** argv) { return hedgegame::run_cli(argc, argv); }
