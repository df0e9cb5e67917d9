fn main() {
    depth_nerf::app::main()
}
