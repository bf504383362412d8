// WebSocket wrapper around the control protocol. The socket is injectable
// so the logic is testable without a browser or a live server.

import { decodeReply, encodeControl, type GenerationReply } from './protocol.js';
import { RequestTracker } from './tracker.js';
import { CONTROL_SEND_INTERVAL_MS, Throttle, type Clock } from './throttle.js';

export type SocketLike = {
	send(data: string): void;
	close(): void;
	onopen: ((ev?: unknown) => void) | null;
	onclose: ((ev?: unknown) => void) | null;
	onmessage: ((ev: { data: unknown }) => void) | null;
	readyState: number;
};

export type SocketFactory = (url: string) => SocketLike;

export type ControlClientOptions = {
	url: string;
	socketFactory?: SocketFactory;
	clock?: Clock;
	onStatus?: (connected: boolean) => void;
	onRender?: (reply: GenerationReply) => void;
};

const OPEN = 1;

export class ControlClient {
	readonly tracker = new RequestTracker();
	private socket: SocketLike | null = null;
	private readonly throttle: Throttle<{ p1: number; p2: number; p3: number; cat: number }>;

	constructor(private readonly opts: ControlClientOptions) {
		this.throttle = new Throttle(CONTROL_SEND_INTERVAL_MS, (p) => this.sendNow(p), opts.clock);
	}

	connect(): void {
		const factory: SocketFactory =
			this.opts.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
		const sock = factory(this.opts.url);
		this.socket = sock;
		sock.onopen = () => this.opts.onStatus?.(true);
		sock.onclose = () => {
			this.opts.onStatus?.(false);
			this.socket = null;
		};
		sock.onmessage = (ev) => {
			let reply: GenerationReply;
			try {
				reply = decodeReply(String(ev.data));
			} catch {
				return;
			}
			// stale and superseded replies are dropped without touching the UI
			if (this.tracker.shouldRender(reply)) {
				this.opts.onRender?.(reply);
			}
		};
	}

	/** Rate-limited control update; the newest position always reaches the wire. */
	requestGeneration(values: { p1: number; p2: number; p3: number; cat: number }): void {
		this.throttle.push(values);
	}

	private sendNow(values: { p1: number; p2: number; p3: number; cat: number }): void {
		if (!this.socket || this.socket.readyState !== OPEN) return;
		const id = this.tracker.issue();
		this.socket.send(encodeControl({ id, ...values }));
	}

	close(): void {
		this.throttle.dispose();
		this.socket?.close();
	}
}
