// Provenance service daemon: loads config, binds, serves until SIGINT or
// SIGTERM.

#include <atomic>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "prov/service.hpp"

namespace {

prov::Service* running = nullptr;

void handle_signal(int) {
  if (running) running->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"workflow provenance service"};
  std::string config_path;
  app.add_option("--config", config_path, "config file (or $PROVKERNEL_CONFIG)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    prov::Service service(prov::load_service_config(config_path));
    int port = service.bind();
    running = &service;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::cout << "listening on port " << port << std::endl;
    service.serve();
    std::cout << "stopped" << std::endl;
  } catch (const prov::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
