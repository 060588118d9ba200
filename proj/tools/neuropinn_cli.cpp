#include <cstdio>

int main() {
    std::puts("neuropinn: subcommands pending");
    return 0;
}
