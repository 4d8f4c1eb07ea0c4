#include <iostream>

int main() {
    std::cout << "revid: placeholder\n";
    return 0;
}
