#include <cstdio>

int main() {
    std::puts("gustpp: pipeline CLI not wired up yet");
    return 0;
}
