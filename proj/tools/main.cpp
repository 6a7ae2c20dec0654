#include "tryon/cli.hpp"

int main(int argc, char** argv) { return tryon::dispatch({argv, argv + argc}); }
