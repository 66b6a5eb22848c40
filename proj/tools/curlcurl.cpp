#include "curlcurl/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  return curlcurl::cli::main_entry(argc, argv, std::cout, std::cerr);
}
