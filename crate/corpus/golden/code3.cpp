void work(int& v, const int w){
    v = w;
}
void scoped(bool cond, int z){
    if(cond){
        int var1;
        int& var2 = z;
        work(var1, var2);
    }
}
