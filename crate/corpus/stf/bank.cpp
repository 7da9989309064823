#include <cstdio>

class Account {
public:
    long balance;
    void deposit(long amount) {
        balance = balance + amount;
    }
    long get() const {
        return balance;
    }
};

void transfer(Account& from, Account& to, long amount) {
    from.deposit(-amount);
    to.deposit(amount);
}

int main() {
    Account a;
    Account b;
    Account c;
    a.balance = 100;
    b.balance = 50;
    c.balance = 0;
    a.deposit(10);
    transfer(a, b, 30);
    transfer(b, c, 20);
    c.deposit(5);
    long total = a.get();
    printf("%ld %ld %ld %ld\n", a.balance, b.balance, c.balance, total);
    return 0;
}
