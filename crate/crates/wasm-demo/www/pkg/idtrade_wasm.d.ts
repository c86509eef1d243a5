/* tslint:disable */
/* eslint-disable */

export class Market {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Perfect-foresight profit bound on the 21-level volume grid.
     */
    bound(i: number): number;
    is_empty(): boolean;
    len(): number;
    /**
     * `forecast_noise_std = 0` makes the 5-minute price forecast exact.
     */
    constructor(seed: number, n_products: number, sawtooth_amplitude: number, forecast_noise_std: number);
    price_forecast(i: number): Float64Array;
    prices(i: number): Float64Array;
    /**
     * Delivery start, e.g. `2018-01-01T06:00:00Z`.
     */
    product(i: number): string;
    /**
     * Metrics table of every baseline over the whole market.
     */
    report(): string;
    /**
     * Replays a baseline on product `i` in evaluation mode.
     */
    run(agent: string, i: number): Replay;
    wind(i: number): Float64Array;
}

export class Replay {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Volume held after each minute, forced correction excluded.
     */
    volumes(): Float64Array;
    readonly profit: number;
    readonly steps: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_market_free: (a: number, b: number) => void;
    readonly __wbg_replay_free: (a: number, b: number) => void;
    readonly market_bound: (a: number, b: number) => [number, number, number];
    readonly market_is_empty: (a: number) => number;
    readonly market_len: (a: number) => number;
    readonly market_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly market_price_forecast: (a: number, b: number) => [number, number, number, number];
    readonly market_prices: (a: number, b: number) => [number, number, number, number];
    readonly market_product: (a: number, b: number) => [number, number, number, number];
    readonly market_report: (a: number) => [number, number, number, number];
    readonly market_run: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly market_wind: (a: number, b: number) => [number, number, number, number];
    readonly replay_profit: (a: number) => number;
    readonly replay_steps: (a: number) => number;
    readonly replay_volumes: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
