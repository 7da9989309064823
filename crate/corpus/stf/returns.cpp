#include <cstdio>

void bump(int& x, int by) {
    x = x + by;
}

int classify(int v) {
    int acc = 0;
    switch (v % 3) {
    case 0:
        bump(acc, 10);
        break;
    case 1:
        bump(acc, 20);
        return acc + 1;
    default:
        bump(acc, 30);
    }
    for (int i = 0; i < v; i++) {
        bump(acc, i);
        if (acc > 40) {
            return acc;
        }
    }
    return acc * 2;
}

int main() {
    int r0 = classify(4);
    int r1 = classify(6);
    int r2 = classify(11);
    printf("%d %d %d\n", r0, r1, r2);
    return 0;
}
