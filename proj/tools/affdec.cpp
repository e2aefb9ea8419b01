#include "affdec/cli.hpp"

int main(int argc, char** argv) { return affdec::dispatch(argc, argv); }
